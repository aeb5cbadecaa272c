//! Trains the r=2 pipeline on the synthetic fixture set and reports the loss ratio.
//!
//! `cargo run --release --example train_fixtures -- [steps] [size] [lr]`

use std::time::Instant;

use holotile::fixtures;
use holotile::optimize::{dataset_loss, train, PipelineConfig, PipelineParams, TrainConfig, TrainState};

fn main() -> holotile::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(128);

    let mut cfg = PipelineConfig::default();
    cfg.optical.distance = 1e-3;
    let data = fixtures::dataset(8, size, size);
    let mut train_cfg = TrainConfig {
        steps,
        ..TrainConfig::default()
    };
    if let Some(lr) = args.next().and_then(|s| s.parse().ok()) {
        train_cfg.adam.lr = lr;
    }

    let mut state = TrainState::new(PipelineParams::init(&cfg, 0)?, train_cfg.adam);
    let before = dataset_loss(&data, &state.params, &cfg)?;
    let start = Instant::now();
    let curve = train(&data, &mut state, &cfg, &train_cfg, 0, steps)?;
    let elapsed = start.elapsed().as_secs_f64();
    let after = dataset_loss(&data, &state.params, &cfg)?;

    for p in curve.iter().step_by((steps / 20).max(1)) {
        println!("step {:4}  loss {:.6}", p.step, p.loss);
    }
    println!("dataset loss {before:.6} -> {after:.6}  ratio {:.4}", after / before);
    println!("{steps} steps in {elapsed:.1} s ({:.3} s/step)", elapsed / steps.max(1) as f64);
    Ok(())
}
