//! Networks of the tiled pipeline: the encoder-decoder backbone used as phase
//! generator and phase encoder, the LFMN merge network, and the two-stage
//! pyramid merge.

mod backbone;
pub mod checkpoint;
mod lfmn;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;

pub use backbone::{encoder_forward, generator_forward, BackboneConfig, BackboneParams};
pub use lfmn::{
    eccm_forward, eccm_hidden, lfm_forward, lfmm_forward, lfmn_forward, pyramid_merge,
    pyramid_stage1, EccmParams, LfmParams, LfmnConfig, LfmnParams, PyramidParams,
};

/// Slope of every LeakyReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Weight and bias of one convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Which fan a convolution's initializer scales by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum ConvKind {
    /// weight `(out, in, k, k)`
    Regular,
    /// weight `(in, out, 2, 2)`
    Transposed,
}

impl ConvParams {
    fn register<R: Rng>(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, rng: &mut R) -> Self {
        Self::register_kind(store, name, cin, cout, k, ConvKind::Regular, rng)
    }

    fn register_kind<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        kind: ConvKind,
        rng: &mut R,
    ) -> Self {
        // Kaiming-uniform over fan-in, gain for LeakyReLU(0.1)
        let (shape, fan_in) = match kind {
            ConvKind::Regular => ([cout, cin, k, k], cin * k * k),
            ConvKind::Transposed => ([cin, cout, k, k], cin),
        };
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let weight = ArrayD::from_shape_simple_fn(IxDyn(&shape), || rng.gen_range(-bound..bound));
        ConvParams {
            weight: store.add(format!("{name}.weight"), weight),
            bias: store.add(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[cout]))),
        }
    }

    /// A convolution whose weights start at zero, used for layers that emit
    /// phases: a random head would start the pipeline deep in wrapped speckle.
    fn register_zero(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize) -> Self {
        ConvParams {
            weight: store.add(format!("{name}.weight"), ArrayD::zeros(IxDyn(&[cout, cin, k, k]))),
            bias: store.add(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[cout]))),
        }
    }

    /// Stride-1 "same" convolution.
    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv_same(x, w, Some(b))
    }

    fn apply_strided(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv2d(x, w, Some(b), 2, 1)
    }

    fn apply_transposed(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv_transpose2x2(x, w, Some(b))
    }
}

#[cfg(test)]
mod tests;
