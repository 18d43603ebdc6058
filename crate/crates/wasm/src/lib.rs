//! Browser bindings. Each call solves a small problem and hands back density
//! frames as flat `Float64Array`s for the page to draw.

use serde_json::json;
use wasm_bindgen::prelude::*;

use sbridge::bridge::{solve_schrodinger_system, BridgeProblem};
use sbridge::kernels::TransitionKernel;
use sbridge::quantum::{collapse, evolve, hjb_residual, quantum_bridge, wave_packet, QuantumModel, Region};
use sbridge::sde::uniform_times;
use sbridge::{DensityField, Grid1D};

const N_POINTS: usize = 301;

/// `n_frames` densities on a shared grid, row-major in `values`.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Frames {
    x: Vec<f64>,
    times: Vec<f64>,
    values: Vec<f64>,
    /// Second family of frames drawn for comparison (may be empty).
    reference: Vec<f64>,
    info: String,
}

#[wasm_bindgen]
impl Frames {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }

    /// JSON with the run's headline numbers.
    #[wasm_bindgen(getter)]
    pub fn info(&self) -> String {
        self.info.clone()
    }
}

impl Frames {
    pub fn n_frames(&self) -> usize {
        self.times.len()
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let n = self.x.len();
        &self.values[k * n..(k + 1) * n]
    }
}

/// Bridge between two Gaussians over Brownian motion on `[0, 1]`.
pub fn bridge_frames(
    mean0: f64,
    var0: f64,
    mean1: f64,
    var1: f64,
    sigma2: f64,
    n_frames: usize,
) -> sbridge::Result<Frames> {
    let g = Grid1D::new(-8.0, 8.0, N_POINTS)?;
    let rho0 = DensityField::gaussian(g, mean0, var0)?;
    let rho1 = DensityField::gaussian(g, mean1, var1)?;
    let k = TransitionKernel::heat(g, 0.0, 1.0, sigma2)?;
    let sol = solve_schrodinger_system(&BridgeProblem::new(&rho0, &rho1, k)?, 1e-9, 5000)?;
    let times = uniform_times(0.0, 1.0, n_frames.max(2) - 1);
    let mut values = Vec::with_capacity(times.len() * N_POINTS);
    let mut reference = Vec::with_capacity(times.len() * N_POINTS);
    for &t in &times {
        values.extend_from_slice(sol.density_at(t)?.values());
        // Naive interpolation of the two marginals, for contrast.
        reference.extend(rho0.values().iter().zip(rho1.values()).map(|(a, b)| (1.0 - t) * a + t * b));
    }
    let info = json!({
        "iterations": sol.iterations(),
        "residual": sol.residual(),
        "relative_entropy": sol.relative_entropy(sol.problem().rho0())?,
    });
    Ok(Frames {
        x: g.points(),
        times,
        values,
        reference,
        info: info.to_string(),
    })
}

/// Free packet steered to `N(target_mean, target_var)` at `t = 1`; the
/// reference frames are the unsteered packet.
pub fn quantum_frames(wavenumber: f64, target_mean: f64, target_var: f64, n_frames: usize) -> sbridge::Result<Frames> {
    let g = Grid1D::new(-12.0, 12.0, N_POINTS)?;
    let model = QuantumModel::free(g, 1.0, 1.0)?;
    let psi = wave_packet(g, 0.0, 1.0, wavenumber)?;
    let steps = 300;
    let path = evolve(&psi, &model, 0.0, 1.0, steps)?;
    let target = DensityField::gaussian(g, target_mean, target_var)?;
    let tilde = quantum_bridge(&path, &target)?;
    let hjb = hjb_residual(&path, &tilde)?;
    let n_frames = n_frames.clamp(2, steps + 1);
    let mut times = Vec::with_capacity(n_frames);
    let mut values = Vec::new();
    let mut reference = Vec::new();
    for j in 0..n_frames {
        let k = j * steps / (n_frames - 1);
        times.push(path.times()[k]);
        values.extend_from_slice(tilde.density(k)?.values());
        reference.extend_from_slice(path.density(k)?.values());
    }
    let info = json!({
        "hjb_weighted_l2": hjb.weighted_l2,
        "max_boundary_mass": tilde.max_boundary_mass(),
    });
    Ok(Frames {
        x: g.points(),
        times,
        values,
        reference,
        info: info.to_string(),
    })
}

/// Packet evolved to `t`, then measured on `[a, b]`: frame 0 is the density
/// before, frame 1 after.
pub fn collapse_frames(wavenumber: f64, t: f64, a: f64, b: f64) -> sbridge::Result<Frames> {
    let g = Grid1D::new(-12.0, 12.0, N_POINTS)?;
    let model = QuantumModel::free(g, 1.0, 1.0)?;
    let psi = wave_packet(g, 0.0, 1.0, wavenumber)?;
    let path = evolve(&psi, &model, 0.0, t, 200)?;
    let before = path.density(path.len() - 1)?;
    let (state, p1) = collapse(path.last(), &Region::interval(a, b)?)?;
    let after = DensityField::from_unnormalized(g, state.modulus_sq().into_values())?;
    let mut values = before.values().to_vec();
    values.extend_from_slice(after.values());
    Ok(Frames {
        x: g.points(),
        times: vec![t, t],
        values,
        reference: Vec::new(),
        info: json!({ "p1": p1 }).to_string(),
    })
}

fn js(e: sbridge::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = classicBridge)]
pub fn classic_bridge(mean0: f64, var0: f64, mean1: f64, var1: f64, sigma2: f64, n_frames: usize) -> Result<Frames, JsError> {
    bridge_frames(mean0, var0, mean1, var1, sigma2, n_frames).map_err(js)
}

#[wasm_bindgen(js_name = quantumBridge)]
pub fn quantum_bridge_js(wavenumber: f64, target_mean: f64, target_var: f64, n_frames: usize) -> Result<Frames, JsError> {
    quantum_frames(wavenumber, target_mean, target_var, n_frames).map_err(js)
}

#[wasm_bindgen(js_name = measure)]
pub fn measure(wavenumber: f64, t: f64, a: f64, b: f64) -> Result<Frames, JsError> {
    collapse_frames(wavenumber, t, a, b).map_err(js)
}
