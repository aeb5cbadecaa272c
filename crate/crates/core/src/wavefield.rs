//! Scalar complex wavefields and the optical constants they are sampled with.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SLM pixel pitch of the reference display, in meters.
pub const DEFAULT_PITCH: f64 = 3.74e-6;
/// Red, green and blue laser lines, in meters.
pub const DEFAULT_WAVELENGTHS: [f64; 3] = [680e-9, 520e-9, 450e-9];
pub const DEFAULT_WIDTH: usize = 3840;
pub const DEFAULT_HEIGHT: usize = 2160;
/// Target-to-SLM distance used when nothing else is configured, in meters.
pub const DEFAULT_DISTANCE: f64 = 0.1;

/// Sampling and geometry of a display channel set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalConfig {
    pub pitch: f64,
    pub wavelengths: Vec<f64>,
    /// Signed target-to-SLM distance; negative values back-propagate.
    pub distance: f64,
    pub height: usize,
    pub width: usize,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            pitch: DEFAULT_PITCH,
            wavelengths: DEFAULT_WAVELENGTHS.to_vec(),
            distance: DEFAULT_DISTANCE,
            height: DEFAULT_HEIGHT,
            width: DEFAULT_WIDTH,
        }
    }
}

impl OpticalConfig {
    /// Same optics resampled onto a `height` x `width` grid.
    pub fn with_grid(&self, height: usize, width: usize) -> Self {
        OpticalConfig {
            height,
            width,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            return Err(Error::config("optical.pitch", "must be a positive number of meters"));
        }
        if self.wavelengths.is_empty() {
            return Err(Error::config("optical.wavelengths", "at least one wavelength is required"));
        }
        for (i, w) in self.wavelengths.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::config(
                    format!("optical.wavelengths[{i}]"),
                    "must be a positive number of meters",
                ));
            }
        }
        if !self.distance.is_finite() {
            return Err(Error::config("optical.distance", "must be finite"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("optical.height", "grid must be at least 1x1"));
        }
        Ok(())
    }

    /// Wavelength of channel `index`, or a config error when out of range.
    pub fn wavelength(&self, index: usize) -> Result<f64> {
        self.wavelengths.get(index).copied().ok_or_else(|| {
            Error::config(
                "optical.wavelengths",
                format!("channel {index} requested but only {} configured", self.wavelengths.len()),
            )
        })
    }
}

/// A sampled complex field on a square-pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    data: Array2<Complex64>,
    pitch: f64,
    wavelength: f64,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, pitch: f64, wavelength: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::dim("field must be at least 1x1"));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::domain(format!("pitch must be positive, got {pitch}")));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::domain(format!("wavelength must be positive, got {wavelength}")));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("field contains non-finite samples"));
        }
        Ok(ComplexField {
            data,
            pitch,
            wavelength,
        })
    }

    /// Builds `amplitude * exp(j * phase)` sampled with the pitch of `cfg` and
    /// its first wavelength.
    pub fn from_amplitude_phase(
        amplitude: &Array2<f64>,
        phase: &Array2<f64>,
        cfg: &OpticalConfig,
    ) -> Result<Self> {
        Self::from_amplitude_phase_at(amplitude, phase, cfg.pitch, cfg.wavelength(0)?)
    }

    pub fn from_amplitude_phase_at(
        amplitude: &Array2<f64>,
        phase: &Array2<f64>,
        pitch: f64,
        wavelength: f64,
    ) -> Result<Self> {
        if amplitude.dim() != phase.dim() {
            return Err(Error::dim(format!(
                "amplitude {:?} and phase {:?} differ in shape",
                amplitude.dim(),
                phase.dim()
            )));
        }
        if let Some(a) = amplitude.iter().find(|a| a.is_nan() || **a < 0.0) {
            return Err(Error::domain(format!("amplitude must be non-negative, found {a}")));
        }
        let data = Zip::from(amplitude)
            .and(phase)
            .map_collect(|&a, &p| Complex64::from_polar(a, p));
        Self::new(data, pitch, wavelength)
    }

    /// Unit-amplitude field `exp(j * phase)`.
    pub fn from_phase(phase: &Array2<f64>, pitch: f64, wavelength: f64) -> Result<Self> {
        Self::new(phase.mapv(|p| Complex64::from_polar(1.0, p)), pitch, wavelength)
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    /// Elementwise modulus.
    pub fn amplitude(&self) -> Array2<f64> {
        self.data.mapv(|z| z.norm())
    }

    /// Principal argument in (-pi, pi]; zero samples map to 0.
    pub fn phase(&self) -> Array2<f64> {
        self.data.mapv(principal_arg)
    }

    /// Sum of squared moduli.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Replaces the samples, keeping pitch and wavelength.
    pub fn with_data(&self, data: Array2<Complex64>) -> Result<Self> {
        Self::new(data, self.pitch, self.wavelength)
    }
}

/// `atan2` folded onto (-pi, pi]; `atan2(-0.0, -1.0)` would otherwise give -pi.
pub fn principal_arg(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Wraps an angle onto (-pi, pi].
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi - 2.0 * PI * ((phi - PI) / (2.0 * PI)).ceil();
    // ceil can land one period short for values a few ulps above an odd multiple of pi
    if w <= -PI {
        w + 2.0 * PI
    } else if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg() -> OpticalConfig {
        OpticalConfig::default().with_grid(2, 2)
    }

    #[test]
    fn identity_amplitude_phase() {
        let f = ComplexField::from_amplitude_phase(
            &Array2::ones((2, 2)),
            &Array2::zeros((2, 2)),
            &cfg(),
        )
        .unwrap();
        assert!(f.data().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
        assert_eq!(f.pitch(), DEFAULT_PITCH);
        assert_eq!(f.wavelength(), 680e-9);
    }

    #[test]
    fn euler_identities() {
        let amp = array![[1.0, 0.5]];
        let ph = array![[PI / 2.0, PI]];
        let f = ComplexField::from_amplitude_phase(&amp, &ph, &cfg()).unwrap();
        let d = f.data();
        assert!((d[[0, 0]] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        assert!((d[[0, 1]] - Complex64::new(-0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg();
        let e = ComplexField::from_amplitude_phase(&Array2::ones((2, 2)), &Array2::zeros((2, 3)), &c);
        assert!(matches!(e, Err(Error::Dimension(_))));
        let e = ComplexField::from_amplitude_phase(&array![[-1.0]], &array![[0.0]], &c);
        assert!(matches!(e, Err(Error::Domain(_))));
        let e = ComplexField::new(Array2::zeros((1, 1)), -1.0, 1e-6);
        assert!(matches!(e, Err(Error::Domain(_))));
        let e = ComplexField::new(Array2::zeros((0, 1)), 1.0, 1e-6);
        assert!(matches!(e, Err(Error::Dimension(_))));
    }

    #[test]
    fn readouts() {
        let f = ComplexField::new(
            array![[Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)],
                   [Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0)]],
            1e-6,
            5e-7,
        )
        .unwrap();
        let a = f.amplitude();
        assert_eq!(a[[0, 0]], 5.0);
        assert_eq!(a[[0, 1]], 0.0);
        let p = f.phase();
        assert!((p[[1, 0]] - PI / 2.0).abs() < 1e-15);
        assert_eq!(p[[1, 1]], PI);
        assert_eq!(p[[0, 1]], 0.0);
        assert_eq!(principal_arg(Complex64::new(-1.0, -0.0)), PI);
    }

    #[test]
    fn wrap_range() {
        for &x in &[-PI, PI, 3.0 * PI, -3.0 * PI, 0.0, 7.5, -7.5, 1e3, -1e3] {
            let w = wrap_phase(x);
            assert!(w > -PI && w <= PI, "{x} -> {w}");
            let k = (x - w) / (2.0 * PI);
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert_eq!(wrap_phase(-PI), PI);
    }

    #[test]
    fn default_optics() {
        let c = OpticalConfig::default();
        assert_eq!(c.pitch, 3.74e-6);
        assert_eq!(c.wavelengths, vec![680e-9, 520e-9, 450e-9]);
        assert_eq!((c.width, c.height), (3840, 2160));
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.pitch = -1.0;
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "optical.pitch"),
            other => panic!("{other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn polar_round_trip(re in -5.0f64..5.0, im in -5.0f64..5.0) {
                prop_assume!(re.abs() + im.abs() > 1e-6);
                let f = ComplexField::new(array![[Complex64::new(re, im)]], 1e-6, 5e-7).unwrap();
                let a = f.amplitude();
                let p = f.phase();
                prop_assert!(a[[0, 0]] >= 0.0);
                prop_assert!(p[[0, 0]] > -PI && p[[0, 0]] <= PI);
                let g = ComplexField::from_amplitude_phase_at(&a, &p, 1e-6, 5e-7).unwrap();
                let z = f.data()[[0, 0]];
                prop_assert!((g.data()[[0, 0]] - z).norm() <= 1e-12 * z.norm());
            }
        }
    }
}
