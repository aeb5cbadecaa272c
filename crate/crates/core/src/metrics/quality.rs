use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dim(format!("images differ in shape: {:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.is_empty() {
        return Err(Error::dim("images are empty"));
    }
    Ok(())
}

pub fn mse(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    same_shape(&a, &b)?;
    let s = Zip::from(&a).and(&b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y));
    Ok(s / a.len() as f64)
}

/// `10 log10(1 / mse)` for images in `[0, 1]`; identical images give `+inf`.
pub fn psnr(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Mean PSNR over color channels, each computed separately.
pub fn psnr_channels(a: &[Array2<f64>], b: &[Array2<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::dim("channel lists must be non-empty and of equal length"));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += psnr(x.view(), y.view())?;
    }
    Ok(total / a.len() as f64)
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Valid-mode separable filtering with the SSIM window.
fn blur(x: &Array2<f64>, g: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = x.dim();
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let rows = Array2::from_shape_fn((h, ow), |(i, j)| (0..SSIM_WINDOW).map(|k| g[k] * x[[i, j + k]]).sum::<f64>());
    Array2::from_shape_fn((oh, ow), |(i, j)| (0..SSIM_WINDOW).map(|k| g[k] * rows[[i + k, j]]).sum::<f64>())
}

/// Per-window SSIM factors: luminance and the combined contrast-structure term.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimComponents {
    pub luminance: Array2<f64>,
    pub contrast_structure: Array2<f64>,
}

impl SsimComponents {
    pub fn mean_ssim(&self) -> f64 {
        let s = Zip::from(&self.luminance)
            .and(&self.contrast_structure)
            .fold(0.0, |acc, l, cs| acc + l * cs);
        s / self.luminance.len() as f64
    }
}

pub fn ssim_components(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<SsimComponents> {
    same_shape(&a, &b)?;
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_taps();
    let a = a.to_owned();
    let b = b.to_owned();
    let mu_a = blur(&a, &g);
    let mu_b = blur(&b, &g);
    let aa = blur(&(&a * &a), &g);
    let bb = blur(&(&b * &b), &g);
    let ab = blur(&(&a * &b), &g);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut luminance = Array2::zeros(mu_a.dim());
    let mut contrast_structure = Array2::zeros(mu_a.dim());
    Zip::indexed(&mut luminance)
        .and(&mut contrast_structure)
        .for_each(|idx, l, cs| {
            let (ma, mb) = (mu_a[idx], mu_b[idx]);
            let va = aa[idx] - ma * ma;
            let vb = bb[idx] - mb * mb;
            let cov = ab[idx] - ma * mb;
            *l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            *cs = (2.0 * cov + c2) / (va + vb + c2);
        });
    Ok(SsimComponents {
        luminance,
        contrast_structure,
    })
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range 1.
pub fn ssim(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    Ok(ssim_components(a, b)?.mean_ssim())
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rand_img(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((h, w), || r.gen_range(0.0..1.0))
    }

    #[test]
    fn psnr_closed_form() {
        let a = Array2::zeros((4, 4));
        let b = Array2::from_elem((4, 4), 0.1);
        assert!((psnr(a.view(), b.view()).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr(a.view(), a.view()).unwrap(), f64::INFINITY);
        assert!(psnr(a.view(), Array2::zeros((3, 4)).view()).is_err());
    }

    #[test]
    fn psnr_falls_with_noise() {
        let x = rand_img(32, 32, 1);
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let noise = Array2::from_shape_simple_fn((32, 32), || r.gen_range(-1.0..1.0));
        let scores: Vec<f64> = [0.01, 0.05, 0.2]
            .iter()
            .map(|s| psnr(x.view(), (&x + &(&noise * *s)).view()).unwrap())
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2]);
        let y = &x + &(&noise * 0.1);
        assert_eq!(psnr(x.view(), y.view()).unwrap(), psnr(y.view(), x.view()).unwrap());
    }

    #[test]
    fn ssim_self_and_symmetry() {
        let a = rand_img(20, 17, 3);
        let b = rand_img(20, 17, 4);
        assert!((ssim(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ssim(a.view(), b.view()).unwrap(), ssim(b.view(), a.view()).unwrap());
        let s = ssim(a.view(), b.view()).unwrap();
        assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn ssim_constant_patches() {
        let (x, y) = (0.3, 0.6);
        let a = Array2::from_elem((12, 12), x);
        let b = Array2::from_elem((12, 12), y);
        let c1 = 1e-4;
        let expect = (2.0 * x * y + c1) / (x * x + y * y + c1);
        assert!((ssim(a.view(), b.view()).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn ssim_too_small() {
        let a = Array2::zeros((10, 40));
        assert!(matches!(ssim(a.view(), a.view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn luminance_shift_matches_formula() {
        let a = rand_img(16, 16, 5) * 0.5;
        let b = rand_img(16, 16, 6) * 0.5;
        let k = 0.3;
        let before = ssim_components(a.view(), b.view()).unwrap();
        let after = ssim_components((&a + k).view(), (&b + k).view()).unwrap();
        let g = gaussian_taps();
        let mu_a = blur(&a, &g);
        let mu_b = blur(&b, &g);
        let c1 = 1e-4;
        for ((idx, l), cs) in after.luminance.indexed_iter().zip(after.contrast_structure.iter()) {
            let (ma, mb) = (mu_a[idx] + k, mu_b[idx] + k);
            let predicted = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            assert!((l - predicted).abs() < 1e-6);
            assert!((cs - before.contrast_structure[idx]).abs() < 1e-6);
        }
    }
}
