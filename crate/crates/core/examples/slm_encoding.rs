//! Phase maps for an 8-bit SLM: wrapping, quantization error and the gray
//! levels written to disk.
//!
//! `cargo run --example slm_encoding`

use ndarray::Array2;

use holotile::encoding::{quantize_phase, PhaseMap};
use holotile::wavefield::wrap_phase;
use holotile::Result;

fn main() -> Result<()> {
    let ramp = Array2::from_shape_fn((4, 9), |(i, j)| (j as f64 - 4.0) * 1.1 + i as f64 * 0.3);
    let map = PhaseMap::from_radians(ramp.clone())?;
    println!("wrapped phase:\n{:.3}", map.phase());
    println!("gray levels:\n{}", map.to_gray8());

    let q = quantize_phase(&map, 256)?;
    let back = q.dequantize();
    let worst = map
        .phase()
        .iter()
        .zip(back.phase())
        .map(|(a, b)| wrap_phase(a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "256 levels: worst phase error {worst:.5} rad (bound pi/256 = {:.5})",
        std::f64::consts::PI / 256.0
    );
    Ok(())
}
