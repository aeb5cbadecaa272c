//! Phase-only encodings: double-phase amplitude coding and SLM quantization.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::wavefield::{principal_arg, wrap_phase, ComplexField};

/// A phase-only hologram, values in `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    phase: Array2<f64>,
}

impl PhaseMap {
    /// Wraps arbitrary radians onto the principal range.
    pub fn from_radians(phase: Array2<f64>) -> Result<Self> {
        if phase.is_empty() {
            return Err(Error::dim("phase map must be at least 1x1"));
        }
        if phase.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("phase map contains non-finite values"));
        }
        Ok(PhaseMap {
            phase: phase.mapv(wrap_phase),
        })
    }

    pub fn phase(&self) -> &Array2<f64> {
        &self.phase
    }

    pub fn into_phase(self) -> Array2<f64> {
        self.phase
    }

    pub fn height(&self) -> usize {
        self.phase.nrows()
    }

    pub fn width(&self) -> usize {
        self.phase.ncols()
    }

    /// Unit-amplitude field `exp(j phase)`.
    pub fn to_field(&self, pitch: f64, wavelength: f64) -> Result<ComplexField> {
        ComplexField::from_phase(&self.phase, pitch, wavelength)
    }

    /// 256-level SLM view, level 0 at `-pi`.
    pub fn to_gray8(&self) -> Array2<u8> {
        quantize_phase(self, 256)
            .expect("256 levels are valid")
            .levels()
            .mapv(|v| v as u8)
    }
}

/// Scales a field so its largest amplitude is 1 (all-zero fields are returned as is).
pub fn normalize_amplitude(field: &ComplexField) -> Result<ComplexField> {
    let peak = field.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(field.clone());
    }
    field.with_data(field.data().mapv(|z| z / peak))
}

/// Splits each sample `a exp(j phi)` into `phi +/- acos(a)` on a checkerboard:
/// pixels with `i + j` even take `phi + acos(a)`, odd ones `phi - acos(a)`.
///
/// Amplitudes must already be normalized to at most 1.
pub fn dpac_encode(field: &ComplexField) -> Result<PhaseMap> {
    if let Some(z) = field.data().iter().find(|z| z.norm() > 1.0) {
        return Err(Error::domain(format!(
            "amplitude {} exceeds 1; normalize by the peak amplitude first",
            z.norm()
        )));
    }
    let phase = Array2::from_shape_fn(field.dim(), |(i, j)| {
        let z = field.data()[[i, j]];
        let theta = z.norm().min(1.0).acos();
        let phi = principal_arg(z);
        if (i + j) % 2 == 0 {
            phi + theta
        } else {
            phi - theta
        }
    });
    PhaseMap::from_radians(phase)
}

/// Mean of the two DPAC phasors for amplitude `a` and phase `phi`; equals `a exp(j phi)`.
pub fn dpac_pair_mean(a: f64, phi: f64) -> Complex64 {
    let theta = a.acos();
    (Complex64::from_polar(1.0, phi + theta) + Complex64::from_polar(1.0, phi - theta)) * 0.5
}

/// Uniformly quantized phase map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPhase {
    levels: Array2<u16>,
    count: u32,
}

impl QuantizedPhase {
    pub fn levels(&self) -> &Array2<u16> {
        &self.levels
    }

    pub fn level_count(&self) -> u32 {
        self.count
    }

    /// Maps each level back to the center of its phase bin.
    pub fn dequantize(&self) -> PhaseMap {
        let step = std::f64::consts::TAU / self.count as f64;
        let phase = self
            .levels
            .mapv(|k| -std::f64::consts::PI + (k as f64 + 0.5) * step);
        PhaseMap { phase }
    }
}

/// Uniform quantizer of `(-pi, pi]` into `levels` bins; bin 0 starts at `-pi`.
pub fn quantize_phase(pm: &PhaseMap, levels: u32) -> Result<QuantizedPhase> {
    if !(2..=65536).contains(&levels) {
        return Err(Error::domain(format!("levels must be in [2, 65536], got {levels}")));
    }
    let n = levels as f64;
    let mut out = Array2::<u16>::zeros(pm.phase.dim());
    Zip::from(&mut out).and(&pm.phase).for_each(|o, &p| {
        let k = ((p + std::f64::consts::PI) / std::f64::consts::TAU * n).floor();
        *o = k.clamp(0.0, n - 1.0) as u16;
    });
    Ok(QuantizedPhase { levels: out, count: levels })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn field(data: Array2<Complex64>) -> ComplexField {
        ComplexField::new(data, 1e-6, 5e-7).unwrap()
    }

    #[test]
    fn unit_amplitude_keeps_phase() {
        let f = field(Array2::from_elem((2, 2), Complex64::from_polar(1.0, 0.7)));
        let pm = dpac_encode(&f).unwrap();
        assert!(pm.phase().iter().all(|&p| (p - 0.7).abs() < 1e-12));
    }

    #[test]
    fn zero_amplitude_cancels() {
        let f = field(Array2::zeros((2, 2)));
        let pm = dpac_encode(&f).unwrap();
        assert!((pm.phase()[[0, 0]] - PI / 2.0).abs() < 1e-12);
        assert!((pm.phase()[[0, 1]] + PI / 2.0).abs() < 1e-12);
        let s = Complex64::from_polar(1.0, pm.phase()[[0, 0]]) + Complex64::from_polar(1.0, pm.phase()[[0, 1]]);
        assert!(s.norm() < 1e-12);
    }

    #[test]
    fn pair_mean_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(0.0..=1.0);
            let phi: f64 = rng.gen_range(-PI..PI);
            let m = dpac_pair_mean(a, phi);
            assert!((m - Complex64::from_polar(a, phi)).norm() < 1e-12);
        }
    }

    #[test]
    fn checkerboard_pairs_reconstruct_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = Array2::from_shape_simple_fn((4, 4), || {
            Complex64::from_polar(rng.gen_range(0.0..=1.0), rng.gen_range(-PI..PI))
        });
        let pm = dpac_encode(&field(data.clone())).unwrap();
        for ((i, j), z) in data.indexed_iter() {
            let theta = z.norm().acos();
            let expect = wrap_phase(principal_arg(*z) + if (i + j) % 2 == 0 { theta } else { -theta });
            assert!((wrap_phase(pm.phase()[[i, j]] - expect)).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_above_one_rejected() {
        let f = field(Array2::from_elem((1, 2), Complex64::new(1.5, 0.0)));
        assert!(matches!(dpac_encode(&f), Err(Error::Domain(_))));
        let n = normalize_amplitude(&f).unwrap();
        assert!(dpac_encode(&n).is_ok());
    }

    #[test]
    fn quantizer_edges() {
        let pm = PhaseMap::from_radians(ndarray::arr2(&[[-PI + 1e-9, PI, 0.0]])).unwrap();
        let q = quantize_phase(&pm, 256).unwrap();
        assert_eq!(q.levels()[[0, 0]], 0);
        assert_eq!(q.levels()[[0, 1]], 255);
        assert_eq!(q.levels()[[0, 2]], 128);
        assert!(quantize_phase(&pm, 1).is_err());
        assert!(quantize_phase(&pm, 65537).is_err());
        assert_eq!(quantize_phase(&pm, 65536).unwrap().levels()[[0, 1]], 65535);
    }

    #[test]
    fn quantizer_error_bound_exhaustive() {
        // every bin edge and center, plus points just inside each edge
        let l = 256u32;
        let step = 2.0 * PI / l as f64;
        let mut samples = Vec::new();
        for k in 0..l {
            let lo = -PI + k as f64 * step;
            samples.extend([lo + 1e-12, lo + 0.5 * step, lo + step - 1e-12]);
        }
        samples.push(PI);
        let pm = PhaseMap::from_radians(Array2::from_shape_vec((1, samples.len()), samples).unwrap()).unwrap();
        let back = quantize_phase(&pm, l).unwrap().dequantize();
        for (a, b) in pm.phase().iter().zip(back.phase().iter()) {
            assert!((a - b).abs() <= PI / l as f64 + 1e-12);
        }
    }

    #[test]
    fn gray8_view_matches_quantizer() {
        let pm = PhaseMap::from_radians(ndarray::arr2(&[[-3.0, 0.5, 3.1]])).unwrap();
        let g = pm.to_gray8();
        let q = quantize_phase(&pm, 256).unwrap();
        assert_eq!(g, q.levels().mapv(|v| v as u8));
    }

    proptest! {
        #[test]
        fn requantize_is_idempotent(vals in prop::collection::vec(-10.0f64..10.0, 1..64), levels in 2u32..2048) {
            let n = vals.len();
            let pm = PhaseMap::from_radians(Array2::from_shape_vec((1, n), vals).unwrap()).unwrap();
            let q = quantize_phase(&pm, levels).unwrap();
            let q2 = quantize_phase(&q.dequantize(), levels).unwrap();
            prop_assert_eq!(q, q2);
        }
    }
}
