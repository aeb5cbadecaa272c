//! Deterministic procedural test images standing in for natural-image datasets.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Image `index` of the synthetic set: a smooth background, soft blobs,
/// hard-edged rectangles and disks, and one oriented grating, scaled to `[0, 1]`.
pub fn image(index: u64, height: usize, width: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x686f_6c6f ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let (hf, wf) = (height as f64, width as f64);
    let gx: f64 = rng.gen_range(-0.3..0.3);
    let gy: f64 = rng.gen_range(-0.3..0.3);
    let mut img = Array2::from_shape_fn((height, width), |(i, j)| {
        0.4 + gx * (j as f64 / wf - 0.5) + gy * (i as f64 / hf - 0.5)
    });

    for _ in 0..rng.gen_range(3..7) {
        let (cy, cx) = (rng.gen_range(0.0..hf), rng.gen_range(0.0..wf));
        let sigma = rng.gen_range(0.05..0.2) * hf.min(wf);
        let amp = rng.gen_range(-0.4..0.5);
        img.indexed_iter_mut().for_each(|((i, j), v)| {
            let d2 = (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2);
            *v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
        });
    }
    for _ in 0..rng.gen_range(1..4) {
        let (y0, x0) = (rng.gen_range(0.0..hf * 0.8), rng.gen_range(0.0..wf * 0.8));
        let (h, w) = (rng.gen_range(0.1..0.4) * hf, rng.gen_range(0.1..0.4) * wf);
        let level = rng.gen_range(-0.3..0.3);
        img.indexed_iter_mut().for_each(|((i, j), v)| {
            let (y, x) = (i as f64, j as f64);
            if y >= y0 && y < y0 + h && x >= x0 && x < x0 + w {
                *v += level;
            }
        });
    }
    for _ in 0..rng.gen_range(1..3) {
        let (cy, cx) = (rng.gen_range(0.0..hf), rng.gen_range(0.0..wf));
        let radius = rng.gen_range(0.05..0.2) * hf.min(wf);
        let level = rng.gen_range(-0.3..0.3);
        img.indexed_iter_mut().for_each(|((i, j), v)| {
            if (i as f64 - cy).hypot(j as f64 - cx) < radius {
                *v += level;
            }
        });
    }
    let theta: f64 = rng.gen_range(0.0..TAU);
    let period = rng.gen_range(4.0..12.0);
    let (y0, x0) = (rng.gen_range(0.0..hf * 0.6), rng.gen_range(0.0..wf * 0.6));
    let (gh, gw) = (0.35 * hf, 0.35 * wf);
    img.indexed_iter_mut().for_each(|((i, j), v)| {
        let (y, x) = (i as f64, j as f64);
        if y >= y0 && y < y0 + gh && x >= x0 && x < x0 + gw {
            *v += 0.15 * (TAU * (x * theta.cos() + y * theta.sin()) / period).sin();
        }
    });

    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    img.mapv(|v| (v - lo) / span)
}

/// The first `n` images of the synthetic set.
pub fn dataset(n: usize, height: usize, width: usize) -> Vec<Array2<f64>> {
    (0..n as u64).map(|k| image(k, height, width)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        let a = image(3, 40, 48);
        assert_eq!(a, image(3, 40, 48));
        assert_ne!(a, image(4, 40, 48));
        let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-12);
        assert_eq!(dataset(8, 16, 16).len(), 8);
    }
}
