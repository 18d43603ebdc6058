use clap::Parser;

use sbridge_cli::app::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(execute(Cli::parse()));
}
