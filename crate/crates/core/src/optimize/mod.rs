//! Losses, the tiled synthesis pipeline, Adam, the trainer and the iterative
//! baselines.

mod adam;
mod baselines;
mod pipeline;
mod train;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::autodiff::optimal_scale;
use crate::error::{Error, Result};
use crate::nnets::{BackboneConfig, LfmnConfig};
use crate::wavefield::OpticalConfig;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use baselines::{
    dpac_hologram, gs_iterate, phase_loss_and_grad, reconstruct, sgd_hologram, GsResult, SgdConfig, SgdResult,
};
pub use pipeline::{
    build_pipeline, build_untiled, forward_pipeline, untiled_forward, Merge, Optics, PipelineGraph,
    PipelineOutput, PipelineParams,
};
pub use train::{
    dataset_loss, flip, load_state, save_state, train, write_loss_csv, LossPoint, TrainConfig, TrainState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    L2Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeKind {
    /// LFMN super-resolution merge (or the pyramid when enabled).
    Lfmn,
    /// Plain pixel shuffle, no learned merge.
    Shuffle,
}

/// Where the generator's sub-fields are propagated to the SLM plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationMode {
    /// Shuffle to full definition first, propagate once.
    FullDefinition,
    /// Propagate every sub-field on its own low-definition grid at pitch `p r`.
    LowDefinition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Tiling factor `r` in {1, 2, 4}.
    pub scale: usize,
    /// Two-stage x2/x2 merge; needs `scale = 4`.
    pub pyramid: bool,
    pub merge: MergeKind,
    pub propagation: PropagationMode,
    pub loss: LossKind,
    pub pad_factor: usize,
    /// Index into `optical.wavelengths`.
    pub channel: usize,
    pub lfmn: LfmnConfig,
    pub backbone: BackboneConfig,
    #[serde(skip)]
    pub optical: OpticalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scale: 2,
            pyramid: false,
            merge: MergeKind::Lfmn,
            propagation: PropagationMode::FullDefinition,
            loss: LossKind::L2Scaled,
            pad_factor: 2,
            channel: 0,
            lfmn: LfmnConfig::default(),
            backbone: BackboneConfig::default(),
            optical: OpticalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4].contains(&self.scale) {
            return Err(Error::config("pipeline.scale", format!("must be 1, 2 or 4, got {}", self.scale)));
        }
        if self.pyramid && self.scale != 4 {
            return Err(Error::config("pipeline.pyramid", "the pyramid merge needs scale = 4"));
        }
        if self.pad_factor != 1 && self.pad_factor != 2 {
            return Err(Error::config("pipeline.pad_factor", "must be 1 or 2"));
        }
        self.optical.validate()?;
        self.optical.wavelength(self.channel).map_err(|_| {
            Error::config(
                "pipeline.channel",
                format!("{} wavelengths configured, channel {} requested", self.optical.wavelengths.len(), self.channel),
            )
        })?;
        self.lfmn.validate("pipeline.lfmn")?;
        self.backbone.validate("pipeline.backbone")
    }

    pub fn wavelength(&self) -> Result<f64> {
        self.optical.wavelength(self.channel)
    }

    /// LFMN settings with the scale filled in from the pipeline.
    pub fn effective_lfmn(&self) -> LfmnConfig {
        LfmnConfig {
            scale: if self.pyramid { 2 } else { self.scale },
            ..self.lfmn.clone()
        }
    }

    /// Image sides must be multiples of this.
    pub fn divisor(&self) -> usize {
        self.scale * self.backbone.divisor()
    }
}

fn check_pair(recon: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<()> {
    if recon.dim() != target.dim() {
        return Err(Error::dim(format!("loss: {:?} vs {:?}", recon.dim(), target.dim())));
    }
    if recon.is_empty() {
        return Err(Error::dim("loss: empty images"));
    }
    Ok(())
}

pub fn loss_mse(recon: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    check_pair(&recon, &target)?;
    let s = Zip::from(&recon).and(&target).fold(0.0, |acc, a, t| acc + (a - t) * (a - t));
    Ok(s / recon.len() as f64)
}

/// Closed-form gain `s` minimizing `|| s recon - target ||^2`.
pub fn best_scale(recon: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    check_pair(&recon, &target)?;
    let (a, t) = (recon.as_standard_layout(), target.as_standard_layout());
    Ok(optimal_scale(a.as_slice().unwrap(), t.as_slice().unwrap()))
}

/// Mean squared error after scaling `recon` by [`best_scale`].
pub fn loss_l2_scaled(recon: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    let s = best_scale(recon, target)?;
    loss_mse(recon.mapv(|v| s * v).view(), target)
}

/// Clamps to `[0, 1]` for metrics and image export.
pub fn clamp_unit(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.clamp(0.0, 1.0))
}
