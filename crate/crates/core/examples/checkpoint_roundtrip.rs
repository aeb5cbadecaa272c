//! Saves pipeline weights in the checkpoint container, reloads them and
//! checks that inference is unchanged.
//!
//! `cargo run --example checkpoint_roundtrip -- [path]`

use std::path::PathBuf;

use holotile::nnets::checkpoint;
use holotile::optimize::{forward_pipeline, load_state, AdamConfig, PipelineConfig, PipelineParams};
use holotile::{fixtures, Result};

fn main() -> Result<()> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pipeline.ckpt".into()));
    let mut cfg = PipelineConfig::default();
    cfg.optical.distance = 1e-3;
    let params = PipelineParams::init(&cfg, 42)?;
    checkpoint::save(&path, &params.store)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("{} tensors, {} weights, {bytes} bytes -> {}", params.store.len(), params.store.scalar_count(), path.display());

    let reloaded = load_state(&path, &cfg, AdamConfig::default())?.params;
    let image = fixtures::image(2, 64, 64);
    let a = forward_pipeline(&image, &params, &cfg)?;
    let b = forward_pipeline(&image, &reloaded, &cfg)?;
    println!("identical hologram after reload: {}", a.hologram == b.hologram);
    Ok(())
}
