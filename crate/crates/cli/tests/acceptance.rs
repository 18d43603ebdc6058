//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Reference values are computed here from closed forms or
//! independent quadrature, never read back from the library.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use statrs::function::erf::erf;

use sbridge::bridge::{half_bridge, solve_schrodinger_system, time_reverse, BridgeProblem, BridgeSolution};
use sbridge::entropy::{path_entropy_backward, path_entropy_forward};
use sbridge::kernels::TransitionKernel;
use sbridge::quantum::{
    collapse, collapsed_density, crank_nicolson_step, drift_fields, drifts, evolve, hjb_residual, quantum_bridge,
    wave_packet, CrankNicolson, QuantumModel, Region,
};
use sbridge::sde::{
    duality_check, empirical_density, generator_check, l1_distance, uniform_times, Drift, FieldDrift, Initial,
    Sampler, ZeroDrift,
};
use sbridge::{DensityField, Grid1D};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: false,
        detail: detail.into(),
    }
}

/// Gaussian bridge of the first criteria: N(-1, 0.1) to N(1, 0.1), unit
/// variance rate and horizon, 401 points on [-8, 8].
fn gaussian_bridge(tol: f64) -> (BridgeSolution, f64) {
    let g = Grid1D::new(-8.0, 8.0, 401).unwrap();
    let rho0 = DensityField::gaussian(g, -1.0, 0.1).unwrap();
    let rho1 = DensityField::gaussian(g, 1.0, 0.1).unwrap();
    let start = Instant::now();
    let k = TransitionKernel::heat(g, 0.0, 1.0, 1.0).unwrap();
    let sol = solve_schrodinger_system(&BridgeProblem::new(&rho0, &rho1, k).unwrap(), tol, 5000).unwrap();
    (sol, start.elapsed().as_secs_f64())
}

fn wiener(x: f64, y: f64, dur: f64) -> f64 {
    (-(x - y).powi(2) / (2.0 * dur)).exp() / (2.0 * PI * dur).sqrt()
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// `ln phi(x_j, t)` and `ln phihat(x_j, t)` by direct trapezoid quadrature of
/// the Wiener density, independent of the library's kernels.
fn potentials_at(sol: &BridgeSolution, t: f64) -> (Vec<f64>, Vec<f64>) {
    let g = *sol.problem().grid();
    let (lp1, lph0) = (sol.log_phi1(), sol.log_phihat0());
    let n = g.len();
    let phi = (0..n)
        .map(|j| {
            if t == 1.0 {
                return lp1[j];
            }
            log_sum_exp((0..n).map(|i| wiener(g.x(j), g.x(i), 1.0 - t).ln() + g.weight(i).ln() + lp1[i]))
        })
        .collect();
    let phihat = (0..n)
        .map(|j| {
            if t == 0.0 {
                return lph0[j];
            }
            log_sum_exp((0..n).map(|i| wiener(g.x(i), g.x(j), t).ln() + g.weight(i).ln() + lph0[i]))
        })
        .collect();
    (phi, phihat)
}

fn mass(g: &Grid1D, a: &[f64], b: &[f64]) -> f64 {
    (0..g.len()).map(|i| g.weight(i) * (a[i] + b[i]).exp()).sum()
}

fn criterion_1() -> Outcome {
    let (sol, secs) = gaussian_bridge(1e-8);
    let g = *sol.problem().grid();
    let (phi0, phihat0) = potentials_at(&sol, 0.0);
    let (phi1, phihat1) = potentials_at(&sol, 1.0);
    let l1 = |target: &DensityField, a: &[f64], b: &[f64]| -> f64 {
        (0..g.len()).map(|i| g.weight(i) * ((a[i] + b[i]).exp() - target.values()[i]).abs()).sum()
    };
    let r0 = l1(sol.problem().rho0(), &phi0, &phihat0);
    let r1 = l1(sol.problem().rho1(), &phi1, &phihat1);
    check(
        r0 < 1e-8 && r1 < 1e-8 && sol.iterations() < 500 && secs < 10.0,
        format!(
            "L1 residuals {r0:.2e} / {r1:.2e} (< 1e-8), {} iterations (< 500), {secs:.2} s (< 10 s)",
            sol.iterations()
        ),
    )
}

fn criterion_2() -> Outcome {
    let (sol, _) = gaussian_bridge(1e-8);
    let g = *sol.problem().grid();
    let mut worst: f64 = 0.0;
    let mut worst_lib: f64 = 0.0;
    for t in uniform_times(0.0, 1.0, 10) {
        let (phi, phihat) = potentials_at(&sol, t);
        worst = worst.max((mass(&g, &phi, &phihat) - 1.0).abs());
        worst_lib = worst_lib.max((sol.density_at(t).unwrap().mass() - 1.0).abs());
    }
    check(
        worst < 1e-6 && worst_lib < 1e-6,
        format!("max |mass - 1| over 11 times: {worst:.2e} by quadrature, {worst_lib:.2e} from the solver (< 1e-6)"),
    )
}

fn criterion_3() -> Outcome {
    let g = Grid1D::new(-8.0, 8.0, 401).unwrap();
    let rho0 = DensityField::gaussian(g, -1.0, 0.3).unwrap();
    let rho1 = DensityField::from_fn(g, |x| {
        (-(x - 1.5f64).powi(2) / 0.4).exp() + 0.5 * (-(x + 0.5f64).powi(2) / 0.2).exp()
    })
    .unwrap();
    let solve = |a: &DensityField, b: &DensityField| {
        let k = TransitionKernel::heat(g, 0.0, 1.0, 1.0).unwrap();
        solve_schrodinger_system(&BridgeProblem::new(a, b, k).unwrap(), 1e-12, 5000).unwrap()
    };
    let fwd = solve(&rho0, &rho1);
    let rev = solve(&rho1, &rho0);
    let derived = time_reverse(&fwd).unwrap();
    let mut sup: f64 = 0.0;
    let mut sup_derived: f64 = 0.0;
    for t in uniform_times(0.0, 1.0, 10) {
        let a = fwd.density_at(t).unwrap();
        let b = rev.density_at(1.0 - t).unwrap();
        let c = derived.density_at(1.0 - t).unwrap();
        for i in 0..g.len() {
            sup = sup.max((a.values()[i] - b.values()[i]).abs());
            sup_derived = sup_derived.max((a.values()[i] - c.values()[i]).abs());
        }
    }
    check(
        sup < 1e-8 && sup_derived < 1e-8,
        format!("sup |rho(t) - rho_rev(1-t)| = {sup:.2e} solved, {sup_derived:.2e} reflected (< 1e-8)"),
    )
}

const N_PATHS: usize = 100_000;

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let g = Grid1D::new(-10.0, 10.0, 401).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;

    // Stationary OU against Brownian motion from the same start.
    {
        let q0 = DensityField::gaussian(g, 0.0, 0.5).unwrap();
        let p1 = DensityField::gaussian(g, 0.0, 1.5).unwrap();
        let times = uniform_times(0.0, 1.0, 200);
        let beta = |x: f64, _t: f64| -x;
        let ens = Sampler::new(g, 1.0, N_PATHS, 101).forward(&beta, &q0, &times).unwrap();
        let f = path_entropy_forward(&q0, &q0, &beta, &ZeroDrift, &ens, 1.0).unwrap();
        let b = path_entropy_backward(&q0, &p1, &|x: f64, _t: f64| x, &|x: f64, t: f64| x / (0.5 + t), &ens, 1.0)
            .unwrap();
        let se = f.mc_std_error + b.mc_std_error;
        let ok = (f.total - b.total).abs() < 3.0 * se;
        pass &= ok;
        lines.push(format!("OU fwd {:.5} bwd {:.5} (exact 0.25) gap/SE {:.2}", f.total, b.total, (f.total - b.total).abs() / se));
    }

    // Gaussian bridge against the Wiener process started from rho0.
    {
        let (sol, _) = gaussian_bridge(1e-10);
        let bg = *sol.problem().grid();
        // The backward estimator carries an O(dt) bias (about 0.01 at 100
        // steps); 1000 steps keep it well under one standard error.
        let times = uniform_times(0.0, 1.0, 1000);
        let beta_q = sol.forward_drift_field(&times).unwrap();
        let gamma_q = sol.backward_drift_field(&times).unwrap();
        let rho0 = sol.problem().rho0();
        // Reference marginal N(-1, 0.1 + t); its backward drift is (x + 1) / (0.1 + t).
        let p1 = DensityField::gaussian(bg, -1.0, 1.1).unwrap();
        let gamma_p = |x: f64, t: f64| (x + 1.0) / (0.1 + t);
        let ens = Sampler::new(bg, 1.0, N_PATHS, 103).forward(&beta_q, rho0, &times).unwrap();
        let f = path_entropy_forward(rho0, rho0, &beta_q, &ZeroDrift, &ens, 1.0).unwrap();
        let b = path_entropy_backward(sol.problem().rho1(), &p1, &gamma_q, &gamma_p, &ens, 1.0).unwrap();
        let se = f.mc_std_error + b.mc_std_error;
        let ok = (f.total - b.total).abs() < 3.0 * se;
        pass &= ok;
        lines.push(format!(
            "bridge fwd {:.4} bwd {:.4} (static plan {:.4}) gap/SE {:.2}",
            f.total,
            b.total,
            sol.relative_entropy(rho0).unwrap(),
            (f.total - b.total).abs() / se
        ));
    }

    // Half bridge: Brownian motion from N(0, 1) conditioned to end at N(0, 1).
    {
        let rho1 = DensityField::gaussian(g, 0.0, 1.0).unwrap();
        let p1 = DensityField::gaussian(g, 0.0, 2.0).unwrap();
        let gamma: Arc<dyn Drift> = Arc::new(|x: f64, t: f64| x / (1.0 + t));
        let hb = half_bridge(gamma.clone(), &rho1, &p1).unwrap();
        let times = uniform_times(0.0, 1.0, 250);
        let ens = hb.sample(&Sampler::new(g, 1.0, N_PATHS, 107), &times).unwrap();
        let b = path_entropy_backward(&rho1, &p1, gamma.as_ref(), gamma.as_ref(), &ens, 1.0).unwrap();
        // The optimal model's forward description: marginal variance
        // s(t) = (1 + t) - (1 + t)^2 / 4, start N(0, 3/4).
        let s = |t: f64| (1.0 + t) - (1.0 + t).powi(2) / 4.0;
        let beta_q = move |x: f64, t: f64| x / (1.0 + t) - x / s(t);
        let q0 = DensityField::gaussian(g, 0.0, 0.75).unwrap();
        let p0 = DensityField::gaussian(g, 0.0, 1.0).unwrap();
        let f = path_entropy_forward(&q0, &p0, &beta_q, &ZeroDrift, &ens, 1.0).unwrap();
        let exact = 0.5 * (0.5 - 1.0 + 2f64.ln());
        let kinetic_ok = b.kinetic_term.abs() <= 3.0 * b.mc_std_error;
        let total_ok = (b.total - exact).abs() < 0.05 * exact && (b.total - 0.096574).abs() < 0.05 * 0.096574;
        let agree = (f.total - b.total).abs() < 3.0 * (f.mc_std_error + b.mc_std_error) + 0.05 * exact;
        pass &= kinetic_ok && total_ok && agree;
        lines.push(format!(
            "half bridge kinetic {:.1e} total {:.6} (KL {exact:.6}) fwd {:.4}",
            b.kinetic_term, b.total, f.total
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    check(pass, format!("{}; {secs:.1} s (< 60 s)", lines.join("; ")))
}

fn criterion_5() -> Outcome {
    let g = Grid1D::new(-8.0, 8.0, 401).unwrap();
    let ou = {
        let rho = DensityField::gaussian(g, 0.0, 0.5).unwrap();
        duality_check(&|x: f64, _t: f64| -x, &|x: f64, _t: f64| x, &rho, 0.0, 1.0)
    };
    let brownian = {
        let t = 0.7;
        let rho = DensityField::gaussian(g, 0.0, 0.3 + t).unwrap();
        duality_check(&ZeroDrift, &|x: f64, t: f64| x / (0.3 + t), &rho, t, 1.0)
    };
    let nelson = {
        let qg = Grid1D::new(-10.0, 10.0, 401).unwrap();
        let model = QuantumModel::harmonic(qg, 1.0, 1.0, 0.5).unwrap();
        let psi0 = wave_packet(qg, -1.0, 0.9, 2.0).unwrap();
        let psi = evolve(&psi0, &model, 0.0, 0.8, 80).unwrap().last().clone();
        let d = drifts(&psi, &model).unwrap();
        let rho = DensityField::from_unnormalized(qg, psi.modulus_sq().into_values()).unwrap();
        duality_check(
            &FieldDrift::stationary(d.beta.clone()),
            &FieldDrift::stationary(d.gamma.clone()),
            &rho,
            0.0,
            model.sigma2(),
        )
    };
    check(
        ou < 1e-8 && brownian < 1e-8 && nelson < 1e-10,
        format!("OU {ou:.1e}, Brownian {brownian:.1e} (< 1e-8); Nelson {nelson:.1e} (< 1e-10)"),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let g = Grid1D::new(-10.0, 10.0, 401).unwrap();
    let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
    let psi0 = wave_packet(g, 0.0, 1.0, 0.0).unwrap();
    let path = evolve(&psi0, &model, 0.0, 1.0, 400).unwrap();
    let norms = path.norms();
    let drift = norms.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let dt = 1.0 / 400.0;
    let back = CrankNicolson::new(&model, -dt).unwrap();
    let mut reversal: f64 = 0.0;
    for state in path.states().iter().step_by(40) {
        let mut v = crank_nicolson_step(state, &model, dt).unwrap();
        back.step_in_place(v.values_mut());
        reversal = reversal.max(v.max_abs_diff(state).unwrap());
    }
    // Width from the density by direct quadrature.
    let rho = path.states()[400].modulus_sq();
    let m1: f64 = (0..g.len()).map(|i| g.weight(i) * g.x(i) * rho.values()[i]).sum();
    let m2: f64 = (0..g.len()).map(|i| g.weight(i) * g.x(i).powi(2) * rho.values()[i]).sum();
    let m0: f64 = (0..g.len()).map(|i| g.weight(i) * rho.values()[i]).sum();
    let width2 = m2 / m0 - (m1 / m0).powi(2);
    // sigma0^2 (1 + (hbar t / (2 m sigma0^2))^2) with sigma0 = hbar = m = t = 1.
    let (s0, hbar, m, t) = (1.0f64, 1.0, 1.0, 1.0);
    let exact = s0 * s0 * (1.0 + (hbar * t / (2.0 * m * s0 * s0)).powi(2));
    let secs = start.elapsed().as_secs_f64();
    check(
        drift < 1e-12 && reversal < 1e-12 && (width2 - exact).abs() < 1e-3 && secs < 5.0,
        format!(
            "norm drift/step {drift:.1e}, reversal {reversal:.1e} (< 1e-12); width^2 {width2:.6} vs {exact} (±1e-3); {secs:.2} s (< 5 s)"
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let g = Grid1D::new(-10.0, 10.0, 401).unwrap();
    let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
    let psi = wave_packet(g, 0.0, 1.0, 0.8).unwrap();
    let path = evolve(&psi, &model, 0.0, 1.0, 1000).unwrap();
    let (beta, _, _) = drift_fields(&path).unwrap();
    let ens = Sampler::new(g, model.sigma2(), N_PATHS, 109)
        .record_every(250)
        .forward(&beta, Initial::Density(&path.density(0).unwrap()), path.times())
        .unwrap();
    let hist = Grid1D::new(-10.0, 10.0, 201).unwrap();
    let mut errs = Vec::new();
    for (k, t) in [(250, 0.25), (500, 0.5), (1000, 1.0)] {
        let emp = empirical_density(&ens, t, &hist).unwrap();
        let d = path.density(k).unwrap();
        let exact = DensityField::from_unnormalized(hist, d.values().iter().step_by(2).copied().collect()).unwrap();
        errs.push(l1_distance(&emp, &exact).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        errs.iter().all(|e| *e < 0.05) && secs < 120.0,
        format!(
            "L1 at t = 0.25, 0.5, 1: {:.4}, {:.4}, {:.4} (< 0.05); {secs:.1} s (< 120 s)",
            errs[0], errs[1], errs[2]
        ),
    )
}

fn criterion_8() -> Outcome {
    let g = Grid1D::new(-12.0, 12.0, 401).unwrap();
    let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
    let psi = wave_packet(g, 0.5, 1.0, 0.7).unwrap();
    let path = evolve(&psi, &model, 0.0, 1.0, 400).unwrap();
    let tilde = quantum_bridge(&path, &path.density(400).unwrap()).unwrap();
    let diff = path.max_abs_diff(&tilde).unwrap();
    check(diff < 1e-10, format!("max |psi~ - psi| over the path {diff:.2e} (< 1e-10)"))
}

fn criterion_9() -> Outcome {
    let run = |n: usize, steps: usize| {
        let g = Grid1D::new(-12.0, 12.0, n).unwrap();
        let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
        let psi = wave_packet(g, 0.0, 1.0, 0.0).unwrap();
        let path = evolve(&psi, &model, 0.0, 1.0, steps).unwrap();
        let target = DensityField::gaussian(g, 0.5, 1.0).unwrap();
        let tilde = quantum_bridge(&path, &target).unwrap();
        hjb_residual(&path, &tilde).unwrap()
    };
    let coarse = run(401, 400);
    let fine = run(801, 800);
    let order = (coarse.weighted_l2 / fine.weighted_l2).log2();
    check(
        coarse.weighted_l2 < 1e-3 && order >= 1.8,
        format!(
            "|psi|^2-weighted L2 {:.2e} (< 1e-3), order {order:.2} (>= 1.8); unweighted L2 {:.2e} -> {:.2e}",
            coarse.weighted_l2, coarse.l2, fine.l2
        ),
    )
}

fn criterion_10() -> Outcome {
    // Even point count, h = 0.005: the interval ends sit on cell midpoints.
    let g = Grid1D::new(-7.9975, 7.9975, 3200).unwrap();
    let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
    let psi = wave_packet(g, 0.0, 1.0, 0.0).unwrap();
    let d = Region::interval(-1.0, 1.0).unwrap();
    let (state, p1) = collapse(&psi, &d).unwrap();
    let oracle = erf(1.0 / 2f64.sqrt());
    let norm_err = (state.norm() - 1.0).abs();
    let outside = (0..g.len())
        .filter(|&i| !(g.x(i) >= -1.0 && g.x(i) <= 1.0))
        .map(|i| state.values()[i].norm())
        .fold(0.0, f64::max);
    let inside_nonzero = (0..g.len())
        .filter(|&i| g.x(i) >= -1.0 && g.x(i) <= 1.0)
        .all(|i| state.values()[i].norm() > 0.0);
    let path = evolve(&psi, &model, 0.0, 0.0, 1).unwrap();
    let tilde = quantum_bridge(&path, &collapsed_density(&psi, &d).unwrap()).unwrap();
    let gap = tilde.last().max_abs_diff(&state).unwrap();
    check(
        (p1 - 0.682689).abs() < 1e-6
            && (p1 - oracle).abs() < 1e-6
            && norm_err < 1e-12
            && outside == 0.0
            && inside_nonzero
            && gap < 1e-12,
        format!(
            "p1 {p1:.8} (erf oracle {oracle:.8}, ±1e-6); norm err {norm_err:.1e}; outside max {outside:e}; bridge gap {gap:.1e}"
        ),
    )
}

fn criterion_11() -> Outcome {
    let g = Grid1D::new(-8.0, 8.0, 401).unwrap();
    let rho0 = DensityField::gaussian(g, 0.0, 0.2).unwrap();
    let times = uniform_times(0.0, 1.0, 100);
    let ens = Sampler::new(g, 1.0, N_PATHS, 113).forward(&ZeroDrift, &rho0, &times).unwrap();
    let r = generator_check(&g.sample(|x| x * x), &ens, &ZeroDrift, 1.0).unwrap();
    // Closed form for Brownian motion: E x_T^2 - E x_0^2 = sigma2 * T.
    let lhs_ok = (r.lhs - 1.0).abs() < 5.0 * r.std_error + 1e-3;
    check(
        r.discrepancy < 3.0 * r.std_error && lhs_ok,
        format!(
            "lhs {:.5} rhs {:.5} (exact 1), discrepancy {:.2e} < 3 SE = {:.2e}",
            r.lhs,
            r.rhs,
            r.discrepancy,
            3.0 * r.std_error
        ),
    )
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["fields", "reports"] {
        let Ok(entries) = fs::read_dir(dir.join(sub)) else {
            continue;
        };
        let mut entries: Vec<_> = entries.map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

fn criterion_12() -> Outcome {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let scratch = std::env::temp_dir().join(format!("sbridge-acceptance-{}", std::process::id()));
    let mut compared = Vec::new();
    for name in ["sample", "half_bridge", "classic_bridge", "quantum_identity"] {
        let cfg = configs.join(format!("{name}.toml"));
        let mut trees = Vec::new();
        for run in ["a", "b"] {
            let out = scratch.join(name).join(run);
            let status = Command::new(env!("CARGO_BIN_EXE_sbridge"))
                .args(["run", cfg.to_str().unwrap(), "--seed", "2024", "--output-dir", out.to_str().unwrap()])
                .output()
                .unwrap();
            if !status.status.success() {
                return fail(format!("{name}: run failed: {}", String::from_utf8_lossy(&status.stdout)));
            }
            trees.push(tree(&out));
        }
        if trees[0].is_empty() || trees[0] != trees[1] {
            return fail(format!("{name}: artifacts differ between seeded runs"));
        }
        compared.push(format!("{name} ({} files)", trees[0].len()));
    }
    let _ = fs::remove_dir_all(&scratch);
    check(true, format!("byte-identical fields/ and reports/: {}", compared.join(", ")))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("Schrödinger-system fixed point", criterion_1),
        ("bridge mass and factorization", criterion_2),
        ("time reversal", criterion_3),
        ("Girsanov consistency", criterion_4),
        ("duality relation", criterion_5),
        ("Schrödinger solver", criterion_6),
        ("Nelson process validity", criterion_7),
        ("quantum bridge identity case", criterion_8),
        ("HJB verification", criterion_9),
        ("collapse", criterion_10),
        ("generator check", criterion_11),
        ("determinism", criterion_12),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            fail(format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            k + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
