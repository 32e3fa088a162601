//! Runs a JSON experiment config through the same path as the `run`
//! subcommand and prints the summary.
//!
//! `cargo run --example run_config -- crates/core/configs/affine_mode3.json`

use std::path::Path;

use conformal_flow::cli::{self, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/configs/yamabe_mode2.json").to_string()
    });
    let path = Path::new(&path);
    let config = ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?;
    let out = std::env::temp_dir().join("conformal-flow").join(&config.output_dir);
    let summary = cli::run_experiment(&config, path.parent().unwrap_or(Path::new(".")), &out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    println!("outputs in {}", out.display());
    Ok(())
}
