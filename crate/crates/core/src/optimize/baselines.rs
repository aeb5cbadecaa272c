use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{optimal_scale, ParamStore};
use crate::encoding::{dpac_encode, normalize_amplitude, PhaseMap};
use crate::error::{Error, Result};
use crate::propagation::TransferFunction;
use crate::wavefield::ComplexField;

use super::{adam_step, loss_mse, AdamConfig, AdamState, Optics, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub iters: usize,
    pub lr: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { iters: 1000, lr: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdResult {
    pub hologram: PhaseMap,
    /// Loss before each update.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsResult {
    pub hologram: PhaseMap,
    /// Target-plane amplitude error before each iteration and after the last.
    pub errors: Vec<f64>,
}

fn random_phase(dim: (usize, usize), seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn(dim, || rng.gen_range(-PI..PI))
}

fn check_target(target: &Array2<f64>, optics: &Optics) -> Result<()> {
    if target.dim() != optics.backward.dim() {
        return Err(Error::dim(format!(
            "target {:?} vs optics grid {:?}",
            target.dim(),
            optics.backward.dim()
        )));
    }
    Ok(())
}

/// Target-plane amplitude of the phase-only hologram `phase`.
pub fn reconstruct(phase: &Array2<f64>, back: &TransferFunction) -> Result<Array2<f64>> {
    let u = phase.mapv(|p| Complex64::from_polar(1.0, p));
    Ok(back.apply(&u)?.mapv(|z| z.norm()))
}

/// Gain-corrected loss of `phase` and its gradient.
///
/// With `v = P e^{j phi}`, `A = |v|` and `g_A = dL/dA`, the field gradient
/// `g_v = g_A v / |v|` (a real pair, i.e. `2 dL/d conj(v)`) is pulled back
/// through the adjoint, `g_u = P^H g_v`, and
/// `dL/dphi = Im(conj(u) g_u) = 2 Im(conj(u) dL/d conj(u))`.
pub fn phase_loss_and_grad(
    phase: &Array2<f64>,
    target: &Array2<f64>,
    back: &TransferFunction,
) -> Result<(f64, Array2<f64>)> {
    if phase.dim() != target.dim() {
        return Err(Error::dim(format!("phase {:?} vs target {:?}", phase.dim(), target.dim())));
    }
    let u = phase.mapv(|p| Complex64::from_polar(1.0, p));
    let v = back.apply(&u)?;
    let amp = v.mapv(|z| z.norm());
    let (a, t) = (amp.as_standard_layout(), target.as_standard_layout());
    let s = optimal_scale(a.as_slice().unwrap(), t.as_slice().unwrap());
    let n = amp.len() as f64;
    let loss = Zip::from(&amp).and(target).fold(0.0, |acc, a, t| acc + (s * a - t) * (s * a - t)) / n;
    let g_v = Zip::from(&v).and(&amp).and(target).map_collect(|z, &a, &t| {
        let g_a = 2.0 * s * (s * a - t) / n;
        if a > 0.0 {
            z * (g_a / a)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let g_u = back.apply_adjoint(&g_v)?;
    let grad = Zip::from(&u).and(&g_u).map_collect(|u, g| (u.conj() * g).im);
    Ok((loss, grad))
}

/// Optimizes a free phase map by Adam on the gain-corrected loss.
pub fn sgd_hologram(target: &Array2<f64>, cfg: &PipelineConfig, sgd: &SgdConfig, seed: u64) -> Result<SgdResult> {
    let optics = Optics::new(cfg, target.nrows(), target.ncols())?;
    check_target(target, &optics)?;
    let mut store = ParamStore::new();
    let id = store.add("phase", random_phase(target.dim(), seed).into_dyn());
    let mut adam = AdamState::new(
        &store,
        AdamConfig {
            lr: sgd.lr,
            ..AdamConfig::default()
        },
    );
    let mut losses = Vec::with_capacity(sgd.iters);
    for _ in 0..sgd.iters {
        let phase = store.get(id).view().into_dimensionality().expect("2-d phase").to_owned();
        let (loss, grad) = phase_loss_and_grad(&phase, target, &optics.backward)?;
        losses.push(loss);
        adam_step(&mut store, &[grad.into_dyn()], &mut adam)?;
    }
    let phase: Array2<f64> = store.get(id).clone().into_dimensionality().expect("2-d phase");
    Ok(SgdResult {
        hologram: PhaseMap::from_radians(phase)?,
        losses,
    })
}

/// Gerchberg-Saxton: alternately imposes the target amplitude at the target
/// plane and unit amplitude at the SLM plane.
pub fn gs_iterate(target: &Array2<f64>, cfg: &PipelineConfig, iters: usize, seed: u64) -> Result<GsResult> {
    let optics = Optics::new(cfg, target.nrows(), target.ncols())?;
    check_target(target, &optics)?;
    let mut phase = random_phase(target.dim(), seed);
    let mut errors = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let u = phase.mapv(|p| Complex64::from_polar(1.0, p));
        let v = optics.backward.apply(&u)?;
        errors.push(loss_mse(v.mapv(|z| z.norm()).view(), target.view())?);
        let imposed = Zip::from(&v).and(target).map_collect(|z, &t| Complex64::from_polar(t, z.arg()));
        let w = optics.forward.apply(&imposed)?;
        phase = w.mapv(|z| z.arg());
    }
    errors.push(loss_mse(reconstruct(&phase, &optics.backward)?.view(), target.view())?);
    Ok(GsResult {
        hologram: PhaseMap::from_radians(phase)?,
        errors,
    })
}

/// Double-phase coding of the SLM-plane field of `target` (flat initial phase).
pub fn dpac_hologram(target: &Array2<f64>, cfg: &PipelineConfig) -> Result<PhaseMap> {
    let optics = Optics::new(cfg, target.nrows(), target.ncols())?;
    check_target(target, &optics)?;
    let field = ComplexField::new(
        target.mapv(|a| Complex64::new(a, 0.0)),
        cfg.optical.pitch,
        cfg.wavelength()?,
    )?;
    let slm = field.with_data(optics.forward.apply(field.data())?)?;
    dpac_encode(&normalize_amplitude(&slm)?)
}

