//! Per-stage memory of one training step at r = 1, 2 and 4 on the same grid.
//!
//! `cargo run --example memory_ledger -- [size]`

use holotile::autodiff::Tape;
use holotile::metrics::{MemoryLedger, Stage};
use holotile::optimize::{build_pipeline, Optics, PipelineConfig, PipelineParams};
use holotile::{fixtures, Result};

fn main() -> Result<()> {
    let size: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    let image = fixtures::image(1, size, size);
    let mut backbone = Vec::new();
    for scale in [1, 2, 4] {
        let mut cfg = PipelineConfig {
            scale,
            ..PipelineConfig::default()
        };
        cfg.optical.distance = 1e-3;
        let params = PipelineParams::init(&cfg, 0)?;
        let optics = Optics::new(&cfg, size, size)?;
        let ledger = MemoryLedger::new();
        let mut tape = Tape::with_ledger(ledger.clone());
        let g = build_pipeline(&mut tape, &image, &params, &cfg, &optics)?;
        tape.backward(g.loss)?;
        let report = ledger.report();
        println!("r = {scale}, {size}x{size}\n{}", report.to_table());
        backbone.push(report.peak(Stage::Generator) + report.peak(Stage::Encoder));
    }
    println!(
        "generator+encoder peak relative to r=1: r=2 {:.3}, r=4 {:.3}",
        backbone[1] as f64 / backbone[0] as f64,
        backbone[2] as f64 / backbone[0] as f64
    );
    Ok(())
}
