use std::sync::Arc;

use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{optimal_scale, ParamStore, Tape, Tensor, Var};
use crate::encoding::PhaseMap;
use crate::error::{Error, Result};
use crate::metrics::Stage;
use crate::nnets::{
    encoder_forward, generator_forward, lfmn_forward, pyramid_merge, BackboneParams, LfmnParams, PyramidParams,
};
use crate::propagation::TransferFunction;

use super::{LossKind, MergeKind, PipelineConfig, PropagationMode};

/// The learned merge in use.
#[derive(Debug, Clone, PartialEq)]
pub enum Merge {
    Shuffle,
    Lfmn(LfmnParams),
    Pyramid(PyramidParams),
}

/// Every learnable weight of one pipeline, held in a single store.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub store: ParamStore,
    pub generator: BackboneParams,
    pub encoder: BackboneParams,
    pub merge: Merge,
}

impl PipelineParams {
    /// Fresh weights for `cfg`, drawn from a generator seeded with `seed`.
    pub fn init(cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let rr = cfg.scale * cfg.scale;
        let generator = BackboneParams::register(&mut store, "generator", &cfg.backbone, rr, rr, &mut rng)?;
        let encoder = BackboneParams::register(&mut store, "encoder", &cfg.backbone, 2 * rr, rr, &mut rng)?;
        let lfmn = cfg.effective_lfmn();
        let merge = match (cfg.merge, cfg.pyramid) {
            (MergeKind::Shuffle, _) => Merge::Shuffle,
            (MergeKind::Lfmn, false) => Merge::Lfmn(LfmnParams::register(&mut store, "lfmn", &lfmn, &mut rng)?),
            (MergeKind::Lfmn, true) => Merge::Pyramid(PyramidParams::register(&mut store, "pyramid", &lfmn, &mut rng)?),
        };
        Ok(PipelineParams {
            store,
            generator,
            encoder,
            merge,
        })
    }

    /// Zeroes every merge-network weight, which reduces the merge to a plain shuffle.
    pub fn zero_merge(&mut self) {
        self.store.zero_prefix("lfmn.");
        self.store.zero_prefix("pyramid.");
    }
}

/// Transfer functions for one image size.
#[derive(Debug, Clone)]
pub struct Optics {
    pub forward: Arc<TransferFunction>,
    pub backward: Arc<TransferFunction>,
    /// Per-tile propagation used by [`PropagationMode::LowDefinition`].
    pub low_definition: Option<Arc<TransferFunction>>,
}

impl Optics {
    pub fn new(cfg: &PipelineConfig, height: usize, width: usize) -> Result<Self> {
        let o = &cfg.optical;
        let lambda = cfg.wavelength()?;
        let tf = |h, w, pitch, d| TransferFunction::new(h, w, pitch, lambda, d, cfg.pad_factor).map(Arc::new);
        let low_definition = match cfg.propagation {
            PropagationMode::FullDefinition => None,
            PropagationMode::LowDefinition => Some(tf(
                height / cfg.scale,
                width / cfg.scale,
                o.pitch * cfg.scale as f64,
                o.distance,
            )?),
        };
        Ok(Optics {
            forward: tf(height, width, o.pitch, o.distance)?,
            backward: tf(height, width, o.pitch, -o.distance)?,
            low_definition,
        })
    }
}

/// Handles into a recorded pipeline run.
#[derive(Debug, Clone, Copy)]
pub struct PipelineGraph {
    /// Merged SLM phase, `(1, 1, H, W)`, not wrapped.
    pub phase: Var,
    /// Amplitude at the target plane before gain correction.
    pub amplitude: Var,
    pub target: Var,
    pub loss: Var,
}

/// Result of one inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub hologram: PhaseMap,
    /// Target-plane amplitude multiplied by the optimal gain.
    pub reconstruction: Array2<f64>,
    pub gain: f64,
    pub loss: f64,
}

fn image_tensor(image: &Array2<f64>) -> Tensor {
    image.as_standard_layout().into_owned().insert_axis(Axis(0)).insert_axis(Axis(0))
}

fn check_image(image: &Array2<f64>, cfg: &PipelineConfig, optics: &Optics) -> Result<()> {
    let (h, w) = image.dim();
    let d = cfg.divisor();
    if h % d != 0 || w % d != 0 {
        return Err(Error::dim(format!(
            "image {h}x{w} must be divisible by {d} (scale {} times backbone downsampling)",
            cfg.scale
        )));
    }
    if optics.forward.dim() != (h, w) {
        return Err(Error::dim(format!("optics built for {:?}, image is {h}x{w}", optics.forward.dim())));
    }
    Ok(())
}

/// Unit-amplitude hologram from `phase`, propagated back to the target plane.
fn reconstruct_on_tape(tape: &mut Tape, phase: Var, optics: &Optics) -> Result<Var> {
    let ones = tape.constant(Tensor::ones(tape.value(phase).dim()));
    let holo = tape.polar(ones, phase)?;
    let back = tape.propagate(holo, &optics.backward)?;
    tape.modulus(back)
}

fn loss_on_tape(tape: &mut Tape, kind: LossKind, amplitude: Var, target: Var) -> Result<Var> {
    tape.set_stage(Stage::AutodiffTape);
    match kind {
        LossKind::Mse => tape.mse(amplitude, target),
        LossKind::L2Scaled => tape.scaled_mse(amplitude, target),
    }
}

/// Records the tiled pipeline for one `image` (amplitudes in `[0, 1]`).
pub fn build_pipeline(
    tape: &mut Tape,
    image: &Array2<f64>,
    params: &PipelineParams,
    cfg: &PipelineConfig,
    optics: &Optics,
) -> Result<PipelineGraph> {
    check_image(image, cfg, optics)?;
    let r = cfg.scale;
    let store = &params.store;

    tape.set_stage(Stage::Generator);
    let target = tape.constant(image_tensor(image));
    let tiles = tape.pixel_unshuffle(target, r)?;
    let phases = generator_forward(tape, store, &params.generator, tiles)?;

    let sub_fields = match (cfg.propagation, &optics.low_definition) {
        (PropagationMode::FullDefinition, _) => {
            tape.set_stage(Stage::Asm);
            let phase = tape.pixel_shuffle(phases, r)?;
            let field = tape.polar(target, phase)?;
            let slm = tape.propagate(field, &optics.forward)?;
            tape.set_stage(Stage::Encoder);
            tape.pixel_unshuffle(slm, r)?
        }
        (PropagationMode::LowDefinition, Some(tf)) => {
            tape.set_stage(Stage::Asm);
            let fields = tape.polar(tiles, phases)?;
            tape.propagate(fields, tf)?
        }
        (PropagationMode::LowDefinition, None) => {
            return Err(Error::config("pipeline.propagation", "optics lack the low-definition propagator"))
        }
    };

    tape.set_stage(Stage::Encoder);
    let holo_tiles = encoder_forward(tape, store, &params.encoder, sub_fields)?;

    tape.set_stage(Stage::MergeSr);
    let phase = match &params.merge {
        Merge::Shuffle => tape.pixel_shuffle(holo_tiles, r)?,
        Merge::Lfmn(p) => lfmn_forward(tape, store, p, holo_tiles)?,
        Merge::Pyramid(p) => pyramid_merge(tape, store, p, holo_tiles)?,
    };

    tape.set_stage(Stage::Asm);
    let amplitude = reconstruct_on_tape(tape, phase, optics)?;
    let loss = loss_on_tape(tape, cfg.loss, amplitude, target)?;
    Ok(PipelineGraph {
        phase,
        amplitude,
        target,
        loss,
    })
}

/// The same generator/encoder chain without any tiling; needs `scale = 1`
/// weights.
pub fn build_untiled(
    tape: &mut Tape,
    image: &Array2<f64>,
    params: &PipelineParams,
    cfg: &PipelineConfig,
    optics: &Optics,
) -> Result<PipelineGraph> {
    if cfg.scale != 1 {
        return Err(Error::config("pipeline.scale", "the untiled baseline runs at scale 1"));
    }
    check_image(image, cfg, optics)?;
    let store = &params.store;
    tape.set_stage(Stage::Generator);
    let target = tape.constant(image_tensor(image));
    let phase = generator_forward(tape, store, &params.generator, target)?;
    tape.set_stage(Stage::Asm);
    let field = tape.polar(target, phase)?;
    let slm = tape.propagate(field, &optics.forward)?;
    tape.set_stage(Stage::Encoder);
    let phase = encoder_forward(tape, store, &params.encoder, slm)?;
    tape.set_stage(Stage::Asm);
    let amplitude = reconstruct_on_tape(tape, phase, optics)?;
    let loss = loss_on_tape(tape, cfg.loss, amplitude, target)?;
    Ok(PipelineGraph {
        phase,
        amplitude,
        target,
        loss,
    })
}

fn finish(tape: &Tape, g: &PipelineGraph) -> Result<PipelineOutput> {
    let plane = |v: Var| -> Array2<f64> {
        let t: &Array4<f64> = tape.value(v);
        t.index_axis(Axis(0), 0).index_axis(Axis(0), 0).to_owned()
    };
    let amp = plane(g.amplitude);
    let target = plane(g.target);
    let gain = optimal_scale(
        amp.as_slice().expect("standard layout"),
        target.as_slice().expect("standard layout"),
    );
    Ok(PipelineOutput {
        hologram: PhaseMap::from_radians(plane(g.phase))?,
        reconstruction: amp.mapv(|a| a * gain),
        gain,
        loss: tape.value(g.loss)[[0, 0, 0, 0]],
    })
}

/// Synthesizes a phase-only hologram for `image` and simulates its reconstruction.
pub fn forward_pipeline(image: &Array2<f64>, params: &PipelineParams, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let optics = Optics::new(cfg, image.nrows(), image.ncols())?;
    let mut tape = Tape::new();
    let g = build_pipeline(&mut tape, image, params, cfg, &optics)?;
    finish(&tape, &g)
}

/// Untiled counterpart of [`forward_pipeline`].
pub fn untiled_forward(image: &Array2<f64>, params: &PipelineParams, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let optics = Optics::new(cfg, image.nrows(), image.ncols())?;
    let mut tape = Tape::new();
    let g = build_untiled(&mut tape, image, params, cfg, &optics)?;
    finish(&tape, &g)
}
