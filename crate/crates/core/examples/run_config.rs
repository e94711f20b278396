//! Runs a config without the binary and prints the table.
//!
//! `cargo run --example run_config -- configs/trace.toml`

use std::path::PathBuf;

use keldysh_lab::cli::{execute, ExperimentConfig};

fn main() -> keldysh_lab::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/trace.toml")));
    let cfg = ExperimentConfig::load(&path)?;
    let out = execute(&cfg)?;
    print!("{}", out.table.to_csv());
    println!("{}: pass={}", cfg.experiment, out.pass);
    Ok(())
}
