//! Trains the full model and each ablation on the synthetic fixtures and
//! prints the PSNR/SSIM table.
//!
//! `cargo run --release --example ablation_study -- [steps] [size]`

use std::path::PathBuf;

use holotile::commands::{cmd_ablate, AblateArgs};
use holotile::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let dir = std::env::temp_dir().join("holotile_ablation");
    std::fs::create_dir_all(&dir).map_err(|e| holotile::Error::Io { path: dir.clone(), source: e })?;
    let config: PathBuf = dir.join("desk.toml");
    std::fs::write(&config, "[optical]\ndistance = 1e-3\n")
        .map_err(|e| holotile::Error::Io { path: config.clone(), source: e })?;

    let report = cmd_ablate(&AblateArgs {
        scenarios: Vec::new(),
        config: Some(config),
        dataset_dir: None,
        fixtures: 8,
        size,
        steps: Some(steps),
        seed: None,
        checkpoint_dir: None,
        json: false,
    })?;
    println!("{} images, {} steps per model", report.images, report.steps);
    print!("{}", report.to_text());
    Ok(())
}
