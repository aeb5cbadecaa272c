//! Band-limited angular spectrum propagation.
//!
//! The transfer function is
//! `H(fx, fy) = exp(j 2 pi d sqrt(1/lambda^2 - fx^2 - fy^2))` on propagating
//! frequencies, zero on evanescent ones, and additionally zero outside the
//! per-axis band limit `f_lim = 1 / (lambda * sqrt((2 d / S)^2 + 1))`, with
//! `S` the extent of the padded sampling window along that axis. Fields are
//! zero-padded to `pad_factor` times their size (centered), filtered in the
//! frequency domain, and cropped back.

use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::wavefield::{ComplexField, OpticalConfig};

struct Plans {
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Plans {
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn transform(&self, buf: &mut Array2<Complex64>, inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf.as_slice_mut().expect("standard layout"));
        let mut t = buf.t().as_standard_layout().into_owned();
        col.process(t.as_slice_mut().expect("standard layout"));
        buf.assign(&t.t());
        if inverse {
            let n = (buf.len()) as f64;
            buf.mapv_inplace(|z| z / n);
        }
    }
}

/// Sampled frequency response of free-space propagation over `distance`.
#[derive(Clone)]
pub struct TransferFunction {
    height: usize,
    width: usize,
    pad_factor: usize,
    values: Array2<Complex64>,
    band_mask: Array2<bool>,
    distance: f64,
    wavelength: f64,
    pitch: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for TransferFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransferFunction")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("pad_factor", &self.pad_factor)
            .field("distance", &self.distance)
            .field("wavelength", &self.wavelength)
            .field("pitch", &self.pitch)
            .finish_non_exhaustive()
    }
}

static ADJOINT_FAULT: AtomicBool = AtomicBool::new(false);

/// Mutation hook for the oracle self-test: when set, the adjoint skips the
/// conjugation of the transfer function.
#[doc(hidden)]
pub fn inject_adjoint_fault(on: bool) {
    ADJOINT_FAULT.store(on, Ordering::SeqCst);
}

/// Signed FFT-order frequency of bin `k` on an `n`-point grid with spacing `pitch`.
pub fn fft_frequency(k: usize, n: usize, pitch: f64) -> f64 {
    let signed = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    signed / (n as f64 * pitch)
}

/// Per-axis band limit for a padded window of physical extent `extent`.
pub fn band_limit(wavelength: f64, distance: f64, extent: f64) -> f64 {
    let t = 2.0 * distance / extent;
    1.0 / (wavelength * (t * t + 1.0).sqrt())
}

/// Builds the transfer function for channel wavelength `wavelength` on the grid of `cfg`.
pub fn build_transfer(
    cfg: &OpticalConfig,
    wavelength: f64,
    distance: f64,
    pad_factor: usize,
) -> Result<TransferFunction> {
    TransferFunction::new(cfg.height, cfg.width, cfg.pitch, wavelength, distance, pad_factor)
}

impl TransferFunction {
    pub fn new(
        height: usize,
        width: usize,
        pitch: f64,
        wavelength: f64,
        distance: f64,
        pad_factor: usize,
    ) -> Result<Self> {
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::domain(format!("pitch must be positive, got {pitch}")));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::domain(format!("wavelength must be positive, got {wavelength}")));
        }
        if !distance.is_finite() {
            return Err(Error::domain("distance must be finite"));
        }
        if !(pad_factor == 1 || pad_factor == 2) {
            return Err(Error::config("propagation.pad_factor", "must be 1 or 2"));
        }
        if height == 0 || width == 0 {
            return Err(Error::dim("transfer grid must be at least 1x1"));
        }
        let (ph, pw) = (height * pad_factor, width * pad_factor);
        let fy_lim = band_limit(wavelength, distance, ph as f64 * pitch);
        let fx_lim = band_limit(wavelength, distance, pw as f64 * pitch);
        let inv_l2 = 1.0 / (wavelength * wavelength);

        let mut values = Array2::zeros((ph, pw));
        let mut band_mask = Array2::from_elem((ph, pw), false);
        for u in 0..ph {
            let fy = fft_frequency(u, ph, pitch);
            for v in 0..pw {
                let fx = fft_frequency(v, pw, pitch);
                let kz2 = inv_l2 - fx * fx - fy * fy;
                if kz2 > 0.0 && fx.abs() <= fx_lim && fy.abs() <= fy_lim {
                    band_mask[[u, v]] = true;
                    values[[u, v]] = Complex64::from_polar(1.0, 2.0 * PI * distance * kz2.sqrt());
                }
            }
        }
        Ok(TransferFunction {
            height,
            width,
            pad_factor,
            values,
            band_mask,
            distance,
            wavelength,
            pitch,
            plans: Arc::new(Plans::new(ph, pw)),
        })
    }

    /// Same grid and optics, opposite direction.
    pub fn reversed(&self) -> Self {
        TransferFunction {
            values: self.values.mapv(|z| z.conj()),
            distance: -self.distance,
            ..self.clone()
        }
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn band_mask(&self) -> &Array2<bool> {
        &self.band_mask
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn pad_factor(&self) -> usize {
        self.pad_factor
    }

    /// Unpadded grid.
    pub fn dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn padded_dim(&self) -> (usize, usize) {
        (self.height * self.pad_factor, self.width * self.pad_factor)
    }

    /// Bytes of the padded spatial and frequency buffers one application holds.
    pub fn scratch_bytes(&self) -> usize {
        let (ph, pw) = self.padded_dim();
        2 * ph * pw * std::mem::size_of::<Complex64>()
    }

    fn offset(&self) -> (usize, usize) {
        let (ph, pw) = self.padded_dim();
        ((ph - self.height) / 2, (pw - self.width) / 2)
    }

    pub(crate) fn pad(&self, data: &Array2<Complex64>) -> Array2<Complex64> {
        let (ph, pw) = self.padded_dim();
        let (oy, ox) = self.offset();
        let mut buf = Array2::zeros((ph, pw));
        buf.slice_mut(s![oy..oy + self.height, ox..ox + self.width])
            .assign(data);
        buf
    }

    pub(crate) fn crop(&self, buf: &Array2<Complex64>) -> Array2<Complex64> {
        let (oy, ox) = self.offset();
        buf.slice(s![oy..oy + self.height, ox..ox + self.width])
            .to_owned()
    }

    fn filter(&self, data: &Array2<Complex64>, adjoint: bool) -> Result<Array2<Complex64>> {
        if data.dim() != self.dim() {
            return Err(Error::dim(format!(
                "field grid {:?} does not match transfer grid {:?}",
                data.dim(),
                self.dim()
            )));
        }
        let mut buf = self.pad(data);
        self.plans.transform(&mut buf, false);
        if adjoint && !ADJOINT_FAULT.load(Ordering::Relaxed) {
            buf.zip_mut_with(&self.values, |z, h| *z *= h.conj());
        } else {
            buf.zip_mut_with(&self.values, |z, h| *z *= h);
        }
        self.plans.transform(&mut buf, true);
        Ok(self.crop(&buf))
    }

    /// Applies the propagation operator to raw samples.
    pub fn apply(&self, data: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.filter(data, false)
    }

    /// Applies the Hermitian adjoint of [`TransferFunction::apply`].
    pub fn apply_adjoint(&self, data: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.filter(data, true)
    }

    /// Forward 2-D DFT on the padded grid of this transfer function.
    pub fn spectrum(&self, data: &Array2<Complex64>) -> Array2<Complex64> {
        let mut buf = data.clone();
        self.plans.transform(&mut buf, false);
        buf
    }

    /// Inverse 2-D DFT (normalized) on the padded grid.
    pub fn inverse_spectrum(&self, spec: &Array2<Complex64>) -> Array2<Complex64> {
        let mut buf = spec.clone();
        self.plans.transform(&mut buf, true);
        buf
    }

    fn check_field(&self, field: &ComplexField) -> Result<()> {
        if field.dim() != self.dim() {
            return Err(Error::config(
                "propagation.grid",
                format!("field {:?} vs transfer function {:?}", field.dim(), self.dim()),
            ));
        }
        if !same(field.pitch(), self.pitch) {
            return Err(Error::config(
                "propagation.pitch",
                format!("field pitch {} vs transfer pitch {}", field.pitch(), self.pitch),
            ));
        }
        if !same(field.wavelength(), self.wavelength) {
            return Err(Error::config(
                "propagation.wavelength",
                format!(
                    "field wavelength {} vs transfer wavelength {}",
                    field.wavelength(),
                    self.wavelength
                ),
            ));
        }
        Ok(())
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Propagates `field` by the distance baked into `tf`.
pub fn propagate(field: &ComplexField, tf: &TransferFunction) -> Result<ComplexField> {
    tf.check_field(field)?;
    field.with_data(tf.apply(field.data())?)
}

/// Adjoint of [`propagate`]: `<propagate(x), y> = <x, propagate_adjoint(y)>`.
pub fn propagate_adjoint(grad_out: &ComplexField, tf: &TransferFunction) -> Result<ComplexField> {
    tf.check_field(grad_out)?;
    grad_out.with_data(tf.apply_adjoint(grad_out.data())?)
}

/// Largest field grid the brute-force oracle accepts.
pub const ORACLE_MAX_GRID: usize = 64;

/// Evaluates the same pad / filter / crop operator as [`propagate`] with
/// direct DFT sums instead of FFTs. Cost is O(N^4); grids above 64x64 are refused.
pub fn dft_oracle(field: &ComplexField, tf: &TransferFunction) -> Result<ComplexField> {
    if field.height() > ORACLE_MAX_GRID || field.width() > ORACLE_MAX_GRID {
        return Err(Error::Refused(format!(
            "dft_oracle limited to {ORACLE_MAX_GRID}x{ORACLE_MAX_GRID}, got {:?}",
            field.dim()
        )));
    }
    tf.check_field(field)?;
    let (ph, pw) = tf.padded_dim();
    let (oy, ox) = tf.offset();
    let (h, w) = tf.dim();
    let padded = tf.pad(field.data());

    // twiddles indexed by (k * n) mod N keep the phase arguments exact
    let tw = |n: usize, sign: f64| -> Vec<Complex64> {
        (0..n)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
            .collect()
    };
    let (fy, fx) = (tw(ph, -1.0), tw(pw, -1.0));
    let (iy, ix) = (tw(ph, 1.0), tw(pw, 1.0));

    let mut spectrum = Array2::<Complex64>::zeros((ph, pw));
    for u in 0..ph {
        for v in 0..pw {
            if !tf.band_mask[[u, v]] {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..ph {
                let wy = fy[(u * m) % ph];
                for n in 0..pw {
                    acc += padded[[m, n]] * wy * fx[(v * n) % pw];
                }
            }
            spectrum[[u, v]] = acc * tf.values[[u, v]];
        }
    }

    let norm = (ph * pw) as f64;
    let mut out = Array2::<Complex64>::zeros((h, w));
    for i in 0..h {
        let m = i + oy;
        for j in 0..w {
            let n = j + ox;
            let mut acc = Complex64::new(0.0, 0.0);
            for u in 0..ph {
                let wy = iy[(u * m) % ph];
                for v in 0..pw {
                    acc += spectrum[[u, v]] * wy * ix[(v * n) % pw];
                }
            }
            out[[i, j]] = acc / norm;
        }
    }
    field.with_data(out)
}

/// Inner product `sum(conj(a) * b)`.
pub fn inner(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 520e-9;
    const PITCH: f64 = 3.74e-6;

    pub(crate) fn random_field(h: usize, w: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((h, w), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        ComplexField::new(data, PITCH, LAMBDA).unwrap()
    }

    fn max_abs(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_distance_is_identity_on_band() {
        let tf = TransferFunction::new(16, 16, PITCH, LAMBDA, 0.0, 2).unwrap();
        for (h, m) in tf.values().iter().zip(tf.band_mask()) {
            assert!(*m);
            assert_eq!(*h, Complex64::new(1.0, 0.0));
        }
        let f = random_field(16, 16, 1);
        let g = propagate(&f, &TransferFunction::new(16, 16, PITCH, LAMBDA, 0.0, 1).unwrap()).unwrap();
        assert!(max_abs(f.data(), g.data()) < 1e-10);
        let g = propagate_adjoint(&f, &tf).unwrap();
        assert!(max_abs(f.data(), g.data()) < 1e-10);
    }

    #[test]
    fn reciprocity_of_values() {
        let a = TransferFunction::new(16, 12, PITCH, LAMBDA, 3e-3, 2).unwrap();
        let b = TransferFunction::new(16, 12, PITCH, LAMBDA, -3e-3, 2).unwrap();
        assert_eq!(a.band_mask(), b.band_mask());
        for ((x, y), m) in a.values().iter().zip(b.values()).zip(a.band_mask()) {
            assert!(x.norm() <= 1.0 + 1e-15);
            if *m {
                assert!((x * y - 1.0).norm() < 1e-12);
                assert!((x - y.conj()).norm() < 1e-12);
                assert!((x.norm() - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(*x, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn on_axis_phase() {
        let tf = TransferFunction::new(8, 8, PITCH, LAMBDA, LAMBDA, 1).unwrap();
        assert!((tf.values()[[0, 0]] - 1.0).norm() < 1e-12);
    }

    #[test]
    fn band_limit_clips_high_frequencies() {
        // 2d/S >> 1 here, so the band is far below Nyquist
        let tf = TransferFunction::new(32, 32, PITCH, LAMBDA, 0.1, 2).unwrap();
        let kept = tf.band_mask().iter().filter(|m| **m).count();
        assert!(kept > 0 && kept < 64 * 64 / 4);
        assert!(tf.band_mask()[[0, 0]]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(TransferFunction::new(4, 4, 0.0, LAMBDA, 0.0, 1), Err(Error::Domain(_))));
        assert!(matches!(TransferFunction::new(4, 4, PITCH, -1.0, 0.0, 1), Err(Error::Domain(_))));
        assert!(matches!(TransferFunction::new(4, 4, PITCH, LAMBDA, 0.0, 3), Err(Error::Config { .. })));
    }

    #[test]
    fn metadata_mismatch() {
        let tf = TransferFunction::new(8, 8, PITCH, LAMBDA, 1e-3, 1).unwrap();
        let f = ComplexField::new(Array2::zeros((8, 8)), PITCH * 2.0, LAMBDA).unwrap();
        assert!(matches!(propagate(&f, &tf), Err(Error::Config { .. })));
        let f = ComplexField::new(Array2::zeros((8, 8)), PITCH, 450e-9).unwrap();
        assert!(matches!(propagate(&f, &tf), Err(Error::Config { .. })));
        let f = ComplexField::new(Array2::zeros((8, 4)), PITCH, LAMBDA).unwrap();
        assert!(matches!(propagate(&f, &tf), Err(Error::Config { .. })));
    }

    #[test]
    fn adjoint_equals_reverse_distance() {
        let tf = TransferFunction::new(16, 16, PITCH, LAMBDA, 2e-3, 2).unwrap();
        let back = TransferFunction::new(16, 16, PITCH, LAMBDA, -2e-3, 2).unwrap();
        let f = random_field(16, 16, 5);
        let a = propagate_adjoint(&f, &tf).unwrap();
        let b = propagate(&f, &back).unwrap();
        assert!(max_abs(a.data(), b.data()) < 1e-12);
    }

    #[test]
    fn oracle_constant_field_gets_dc_response() {
        // full-band constant field with pad 1 is a pure DC component
        let tf = TransferFunction::new(8, 8, PITCH, LAMBDA, 1e-3, 1).unwrap();
        let f = ComplexField::new(Array2::from_elem((8, 8), Complex64::new(0.3, -0.2)), PITCH, LAMBDA).unwrap();
        let g = dft_oracle(&f, &tf).unwrap();
        let h0 = tf.values()[[0, 0]];
        for z in g.data() {
            assert!((z - Complex64::new(0.3, -0.2) * h0).norm() < 1e-12);
        }
        let zero = TransferFunction::new(8, 8, PITCH, LAMBDA, 0.0, 2).unwrap();
        let r = random_field(8, 8, 3);
        let g = dft_oracle(&r, &zero).unwrap();
        assert!(max_abs(g.data(), r.data()) < 1e-12);
    }

    #[test]
    fn oracle_refuses_large_grids() {
        let tf = TransferFunction::new(65, 8, PITCH, LAMBDA, 1e-3, 1).unwrap();
        let f = ComplexField::new(Array2::zeros((65, 8)), PITCH, LAMBDA).unwrap();
        assert!(matches!(dft_oracle(&f, &tf), Err(Error::Refused(_))));
    }

    #[test]
    fn linearity() {
        let tf = TransferFunction::new(16, 16, PITCH, LAMBDA, 1.5e-3, 2).unwrap();
        let x = random_field(16, 16, 7);
        let y = random_field(16, 16, 8);
        let (a, b) = (Complex64::new(0.7, -1.3), Complex64::new(-0.2, 0.4));
        let combo = x.with_data(x.data().mapv(|z| z * a) + &y.data().mapv(|z| z * b)).unwrap();
        let lhs = propagate(&combo, &tf).unwrap();
        let rhs = propagate(&x, &tf).unwrap().data().mapv(|z| z * a)
            + &propagate(&y, &tf).unwrap().data().mapv(|z| z * b);
        assert!(max_abs(lhs.data(), &rhs) < 1e-10);
    }

    #[test]
    fn transfer_shared_across_threads() {
        let tf = Arc::new(TransferFunction::new(16, 16, PITCH, LAMBDA, 1e-3, 2).unwrap());
        let f = random_field(16, 16, 11);
        let expect = propagate(&f, &tf).unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let tf = Arc::clone(&tf);
                let f = f.clone();
                std::thread::spawn(move || propagate(&f, &tf).unwrap())
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), expect);
        }
    }

    #[test]
    fn frequency_layout() {
        assert_eq!(fft_frequency(0, 4, 1.0), 0.0);
        assert_eq!(fft_frequency(1, 4, 1.0), 0.25);
        assert_eq!(fft_frequency(2, 4, 1.0), -0.5);
        assert_eq!(fft_frequency(3, 4, 1.0), -0.25);
        assert_eq!(fft_frequency(2, 5, 1.0), 0.4);
        assert_eq!(fft_frequency(3, 5, 1.0), -0.4);
    }
}
