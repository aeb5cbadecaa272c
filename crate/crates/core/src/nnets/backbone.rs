use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

use super::{ConvKind, ConvParams, LEAKY_SLOPE};

/// Channel schedule of the encoder-decoder; `widths[l]` is the width at
/// resolution level `l` (level `l` is downsampled by `2^l`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub widths: Vec<usize>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            widths: vec![32, 64, 128],
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config(format!("{path}.widths"), "needs at least one positive width"));
        }
        Ok(())
    }

    /// Spatial sizes must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << (self.widths.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Level {
    enter: ConvParams,
    refine: ConvParams,
}

#[derive(Debug, Clone, PartialEq)]
struct Up {
    upsample: ConvParams,
    fuse: ConvParams,
    refine: ConvParams,
}

/// Encoder-decoder with stride-2 downsampling, 2x2 transposed-convolution
/// upsampling and skip connections.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    pub config: BackboneConfig,
    pub in_channels: usize,
    pub out_channels: usize,
    levels: Vec<Level>,
    ups: Vec<Up>,
    out: ConvParams,
}

impl BackboneParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        config: &BackboneConfig,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate(prefix)?;
        let w = &config.widths;
        let levels = (0..w.len())
            .map(|l| {
                let cin = if l == 0 { in_channels } else { w[l - 1] };
                Level {
                    enter: ConvParams::register(store, &format!("{prefix}.down{l}.enter"), cin, w[l], 3, rng),
                    refine: ConvParams::register(store, &format!("{prefix}.down{l}.refine"), w[l], w[l], 3, rng),
                }
            })
            .collect();
        let ups = (1..w.len())
            .rev()
            .map(|l| Up {
                upsample: ConvParams::register_kind(
                    store,
                    &format!("{prefix}.up{l}.upsample"),
                    w[l],
                    w[l - 1],
                    2,
                    ConvKind::Transposed,
                    rng,
                ),
                fuse: ConvParams::register(store, &format!("{prefix}.up{l}.fuse"), 2 * w[l - 1], w[l - 1], 3, rng),
                refine: ConvParams::register(store, &format!("{prefix}.up{l}.refine"), w[l - 1], w[l - 1], 3, rng),
            })
            .collect();
        let out = ConvParams::register_zero(store, &format!("{prefix}.out"), w[0], out_channels, 3);
        Ok(BackboneParams {
            config: config.clone(),
            in_channels,
            out_channels,
            levels,
            ups,
            out,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (_, c, h, w) = tape.value(x).dim();
        if c != self.in_channels {
            return Err(Error::dim(format!("backbone expects {} channels, got {c}", self.in_channels)));
        }
        let d = self.config.divisor();
        if h % d != 0 || w % d != 0 {
            return Err(Error::dim(format!(
                "backbone with {} levels needs sizes divisible by {d}, got {h}x{w}",
                self.levels.len()
            )));
        }
        let mut skips = Vec::with_capacity(self.levels.len());
        let mut cur = x;
        for (l, level) in self.levels.iter().enumerate() {
            cur = if l == 0 {
                level.enter.apply(tape, store, cur)?
            } else {
                level.enter.apply_strided(tape, store, cur)?
            };
            cur = tape.leaky_relu(cur, LEAKY_SLOPE);
            cur = level.refine.apply(tape, store, cur)?;
            cur = tape.leaky_relu(cur, LEAKY_SLOPE);
            skips.push(cur);
        }
        skips.pop();
        for up in &self.ups {
            let skip = skips.pop().expect("one skip per upsampling");
            cur = up.upsample.apply_transposed(tape, store, cur)?;
            cur = tape.leaky_relu(cur, LEAKY_SLOPE);
            cur = tape.concat(&[cur, skip])?;
            cur = up.fuse.apply(tape, store, cur)?;
            cur = tape.leaky_relu(cur, LEAKY_SLOPE);
            cur = up.refine.apply(tape, store, cur)?;
            cur = tape.leaky_relu(cur, LEAKY_SLOPE);
        }
        self.out.apply(tape, store, cur)
    }
}

/// Predicts `r^2` phase tiles from `r^2` amplitude tiles `(n, r^2, h, w)`.
pub fn generator_forward(tape: &mut Tape, store: &ParamStore, p: &BackboneParams, sub_images: Var) -> Result<Var> {
    p.forward(tape, store, sub_images)
}

/// Predicts `r^2` phase-only sub-holograms from unshuffled SLM-plane fields
/// `(n, 2 r^2, h, w)` (real tiles, then imaginary tiles).
pub fn encoder_forward(tape: &mut Tape, store: &ParamStore, p: &BackboneParams, sub_fields: Var) -> Result<Var> {
    p.forward(tape, store, sub_fields)
}
