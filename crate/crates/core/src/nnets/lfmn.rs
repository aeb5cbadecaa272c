use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tiling::group_member;

use super::{ConvParams, LEAKY_SLOPE};

/// Shape and component switches of the merge network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfmnConfig {
    /// Upsampling factor `r`; input has `r^2` channels. Set from the pipeline scale.
    #[serde(skip)]
    pub scale: usize,
    /// Feature width `C`.
    pub features: usize,
    /// Number of LFMM blocks `B`.
    pub blocks: usize,
    pub use_grn: bool,
    pub use_lfm: bool,
    pub use_eccm: bool,
}

impl Default for LfmnConfig {
    fn default() -> Self {
        LfmnConfig {
            scale: 2,
            features: 16,
            blocks: 2,
            use_grn: true,
            use_lfm: true,
            use_eccm: true,
        }
    }
}

impl LfmnConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::config(format!("{path}.scale"), "must be at least 1"));
        }
        if self.features < 2 || !self.features.is_multiple_of(2) {
            return Err(Error::config(
                format!("{path}.features"),
                "must be even and at least 2 (the modulation path halves it)",
            ));
        }
        Ok(())
    }
}

/// Hidden width of the channel mixer: `floor(1.25 * c)`.
pub fn eccm_hidden(c: usize) -> usize {
    c * 5 / 4
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfmParams {
    pub reduce: ConvParams,
    pub mix: ConvParams,
    pub restore: ConvParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EccmParams {
    pub expand: ConvParams,
    pub project: ConvParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfmnParams {
    pub config: LfmnConfig,
    pub head: ConvParams,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub blocks: Vec<(LfmParams, EccmParams)>,
    pub tail: ConvParams,
}

impl LfmnParams {
    /// Registers a freshly initialized merge network under `prefix`.
    /// GRN starts at `gamma = beta = 0` (the identity) and the tail at zero,
    /// so a new network merges exactly like a pixel shuffle.
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, config: &LfmnConfig, rng: &mut R) -> Result<Self> {
        config.validate(prefix)?;
        let c = config.features;
        let rr = config.scale * config.scale;
        let head = ConvParams::register(store, &format!("{prefix}.head"), rr, c, 3, rng);
        let gamma = store.add(format!("{prefix}.grn.gamma"), ndarray::ArrayD::zeros(ndarray::IxDyn(&[c])));
        let beta = store.add(format!("{prefix}.grn.beta"), ndarray::ArrayD::zeros(ndarray::IxDyn(&[c])));
        let blocks = (0..config.blocks)
            .map(|i| {
                let p = format!("{prefix}.block{i}");
                let lfm = LfmParams {
                    reduce: ConvParams::register(store, &format!("{p}.lfm.reduce"), c, c / 2, 3, rng),
                    mix: ConvParams::register(store, &format!("{p}.lfm.mix"), c / 2, c / 2, 3, rng),
                    restore: ConvParams::register(store, &format!("{p}.lfm.restore"), c / 2, c, 3, rng),
                };
                let hidden = eccm_hidden(c);
                let eccm = EccmParams {
                    expand: ConvParams::register(store, &format!("{p}.eccm.expand"), c, hidden, 3, rng),
                    project: ConvParams::register(store, &format!("{p}.eccm.project"), hidden, c, 3, rng),
                };
                (lfm, eccm)
            })
            .collect();
        let tail = ConvParams::register_zero(store, &format!("{prefix}.tail"), c, rr, 3);
        Ok(LfmnParams {
            config: config.clone(),
            head,
            gamma,
            beta,
            blocks,
            tail,
        })
    }
}

/// Local feature modulation: a sigmoid attention map from a
/// halve / mix / restore convolution path, multiplied into `f`.
pub fn lfm_forward(tape: &mut Tape, store: &ParamStore, p: &LfmParams, f: Var) -> Result<Var> {
    let c = tape.value(f).dim().1;
    if !c.is_multiple_of(2) {
        return Err(Error::config("lfmn.features", format!("modulation needs an even width, got {c}")));
    }
    let a = p.reduce.apply(tape, store, f)?;
    let a = tape.leaky_relu(a, LEAKY_SLOPE);
    let a = p.mix.apply(tape, store, a)?;
    let a = tape.leaky_relu(a, LEAKY_SLOPE);
    let a = p.restore.apply(tape, store, a)?;
    let a = tape.sigmoid(a);
    tape.mul(f, a)
}

/// Enhanced channel mixer: 3x3 expand to `floor(1.25 c)`, LeakyReLU, 3x3 project back.
pub fn eccm_forward(tape: &mut Tape, store: &ParamStore, p: &EccmParams, f: Var) -> Result<Var> {
    let h = p.expand.apply(tape, store, f)?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    p.project.apply(tape, store, h)
}

/// `F' = LFM(F) + F`, `F'' = ECCM(F') + F'`, with disabled parts skipped.
pub fn lfmm_forward(
    tape: &mut Tape,
    store: &ParamStore,
    block: &(LfmParams, EccmParams),
    config: &LfmnConfig,
    f: Var,
) -> Result<Var> {
    let mut f = f;
    if config.use_lfm {
        let m = lfm_forward(tape, store, &block.0, f)?;
        f = tape.add(m, f)?;
    }
    if config.use_eccm {
        let m = eccm_forward(tape, store, &block.1, f)?;
        f = tape.add(m, f)?;
    }
    Ok(f)
}

/// Merges `r^2` low-definition maps `(n, r^2, h, w)` into `(n, 1, h r, w r)`:
/// `F = GRN(conv_head(I))`, `out = shuffle(conv_tail(blocks(F)) + I)`.
pub fn lfmn_forward(tape: &mut Tape, store: &ParamStore, p: &LfmnParams, input: Var) -> Result<Var> {
    let r = p.config.scale;
    let c = tape.value(input).dim().1;
    if c != r * r {
        return Err(Error::dim(format!("lfmn at scale {r} needs {} channels, got {c}", r * r)));
    }
    let mut f = p.head.apply(tape, store, input)?;
    if p.config.use_grn {
        let gamma = tape.param(store, p.gamma);
        let beta = tape.param(store, p.beta);
        f = tape.grn(f, gamma, beta)?;
    }
    for block in &p.blocks {
        f = lfmm_forward(tape, store, block, &p.config, f)?;
    }
    let t = p.tail.apply(tape, store, f)?;
    let t = tape.add(t, input)?;
    tape.pixel_shuffle(t, r)
}

/// Stage-1 weights are shared by all four groups; stage 2 is independent.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidParams {
    pub stage1: LfmnParams,
    pub stage2: LfmnParams,
}

impl PyramidParams {
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, config: &LfmnConfig, rng: &mut R) -> Result<Self> {
        let config = LfmnConfig {
            scale: 2,
            ..config.clone()
        };
        Ok(PyramidParams {
            stage1: LfmnParams::register(store, &format!("{prefix}.stage1"), &config, rng)?,
            stage2: LfmnParams::register(store, &format!("{prefix}.stage2"), &config, rng)?,
        })
    }
}

/// Runs the shared stage-1 network on each group of `tiles16`, in group order.
pub fn pyramid_stage1(tape: &mut Tape, store: &ParamStore, p: &PyramidParams, tiles16: Var) -> Result<[Var; 4]> {
    let c = tape.value(tiles16).dim().1;
    if c != 16 {
        return Err(Error::dim(format!("pyramid merge needs 16 channels, got {c}")));
    }
    let mut outs = [tiles16; 4];
    for (g, slot) in outs.iter_mut().enumerate() {
        let members: Vec<usize> = (0..4).map(|k| group_member(g, k)).collect();
        let group = tape.select_channels(tiles16, &members)?;
        *slot = lfmn_forward(tape, store, &p.stage1, group)?;
    }
    Ok(outs)
}

/// Two-stage x2 / x2 merge of 16 sub-holograms into one full-definition map.
pub fn pyramid_merge(tape: &mut Tape, store: &ParamStore, p: &PyramidParams, tiles16: Var) -> Result<Var> {
    let groups = pyramid_stage1(tape, store, p, tiles16)?;
    let stack = tape.concat(&groups)?;
    lfmn_forward(tape, store, &p.stage2, stack)
}
