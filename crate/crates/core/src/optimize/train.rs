use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape};
use crate::error::{Error, Result};
use crate::nnets::checkpoint;

use super::{adam_step, build_pipeline, AdamConfig, AdamState, Optics, PipelineConfig, PipelineParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    /// Random horizontal and vertical flips, each with probability 1/2.
    pub flips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            adam: AdamConfig::default(),
            flips: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate("train.adam")
    }
}

/// Weights, optimizer moments and position of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: PipelineParams,
    pub adam: AdamState,
    /// Number of completed steps.
    pub step: usize,
}

impl TrainState {
    pub fn new(params: PipelineParams, adam: AdamConfig) -> Self {
        let adam = AdamState::new(&params.store, adam);
        TrainState { params, adam, step: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

/// Mirrors `image` left-right and/or top-bottom.
pub fn flip(image: &Array2<f64>, horizontal: bool, vertical: bool) -> Array2<f64> {
    let mut v = image.view();
    if horizontal {
        v.invert_axis(Axis(1));
    }
    if vertical {
        v.invert_axis(Axis(0));
    }
    v.as_standard_layout().into_owned()
}

/// Flip decisions of step `step`; one independent stream per step so that a
/// resumed run draws the same augmentations.
fn step_flips(seed: u64, step: usize) -> (bool, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    (rng.gen_bool(0.5), rng.gen_bool(0.5))
}

struct OpticsCache<'a> {
    cfg: &'a PipelineConfig,
    by_size: HashMap<(usize, usize), Optics>,
}

impl<'a> OpticsCache<'a> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        OpticsCache {
            cfg,
            by_size: HashMap::new(),
        }
    }

    fn get(&mut self, dim: (usize, usize)) -> Result<&Optics> {
        if !self.by_size.contains_key(&dim) {
            self.by_size.insert(dim, Optics::new(self.cfg, dim.0, dim.1)?);
        }
        Ok(&self.by_size[&dim])
    }
}

/// Advances `state` until `until` steps are complete and returns the loss of
/// every step run. Image `k mod n` is used at step `k`.
pub fn train(
    dataset: &[Array2<f64>],
    state: &mut TrainState,
    cfg: &PipelineConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    until: usize,
) -> Result<Vec<LossPoint>> {
    if dataset.is_empty() {
        return Err(Error::config("train.dataset", "dataset is empty"));
    }
    cfg.validate()?;
    train_cfg.validate()?;
    let mut optics = OpticsCache::new(cfg);
    let mut curve = Vec::with_capacity(until.saturating_sub(state.step));
    while state.step < until {
        let step = state.step;
        let base = &dataset[step % dataset.len()];
        let (h, v) = if train_cfg.flips { step_flips(seed, step) } else { (false, false) };
        let image = flip(base, h, v);
        let op = optics.get(image.dim())?;
        let (loss, grads) = {
            let mut tape = Tape::new();
            let g = build_pipeline(&mut tape, &image, &state.params, cfg, op)?;
            let grads = tape.backward(g.loss)?;
            let store = &state.params.store;
            let grads: Vec<ArrayD<f64>> = store.ids().map(|id| grads.param_like(store, id)).collect();
            (tape.value(g.loss)[[0, 0, 0, 0]], grads)
        };
        adam_step(&mut state.params.store, &grads, &mut state.adam)?;
        curve.push(LossPoint { step, loss });
        state.step += 1;
    }
    Ok(curve)
}

/// Mean pipeline loss over `dataset` without augmentation.
pub fn dataset_loss(dataset: &[Array2<f64>], params: &PipelineParams, cfg: &PipelineConfig) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::config("train.dataset", "dataset is empty"));
    }
    let mut optics = OpticsCache::new(cfg);
    let mut total = 0.0;
    for image in dataset {
        let op = optics.get(image.dim())?;
        let mut tape = Tape::new();
        let g = build_pipeline(&mut tape, image, params, cfg, op)?;
        total += tape.value(g.loss)[[0, 0, 0, 0]];
    }
    Ok(total / dataset.len() as f64)
}

pub fn write_loss_csv(path: &Path, curve: &[LossPoint]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "step,loss").expect("write to memory");
    for p in curve {
        writeln!(out, "{},{:e}", p.step, p.loss).expect("write to memory");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

const STEP_KEY: &str = "train.step";
const ADAM_STEP_KEY: &str = "adam.step";

/// Saves weights, Adam moments (`adam.m.*`, `adam.v.*`) and the step counter.
pub fn save_state(path: &Path, state: &TrainState) -> Result<()> {
    let mut out = state.params.store.clone();
    let names: Vec<String> = state.params.store.iter().map(|(n, _)| n.to_string()).collect();
    for (k, name) in names.iter().enumerate() {
        out.add(format!("adam.m.{name}"), state.adam.m[k].clone());
        out.add(format!("adam.v.{name}"), state.adam.v[k].clone());
    }
    out.add(STEP_KEY, ArrayD::from_elem(IxDyn(&[]), state.step as f64));
    out.add(ADAM_STEP_KEY, ArrayD::from_elem(IxDyn(&[]), state.adam.step as f64));
    checkpoint::save(path, &out)
}

/// Restores a run saved by [`save_state`] (or plain weights, which start a
/// fresh optimizer) into the architecture described by `cfg`.
pub fn load_state(path: &Path, cfg: &PipelineConfig, adam: AdamConfig) -> Result<TrainState> {
    let file = checkpoint::load(path)?;
    let mut params = PipelineParams::init(cfg, 0)?;
    let mut weights = ParamStore::new();
    for (name, value) in file.iter() {
        if !(name.starts_with("adam.") || name.starts_with("train.")) {
            weights.add(name, value.clone());
        }
    }
    params.store.load_from(&weights).map_err(|e| match e {
        Error::Usage(m) | Error::Dimension(m) => Error::format(path, format!("{m} (does the config match?)")),
        other => other,
    })?;
    let mut state = TrainState::new(params, adam);
    let scalar = |key: &str| file.find(key).map(|id| file.get(id).iter().next().copied().unwrap_or(0.0));
    if let Some(step) = scalar(STEP_KEY) {
        state.step = step as usize;
        state.adam.step = scalar(ADAM_STEP_KEY).unwrap_or(step) as u64;
        let names: Vec<String> = state.params.store.iter().map(|(n, _)| n.to_string()).collect();
        for (k, name) in names.iter().enumerate() {
            let moment = |prefix: &str| {
                file.find(&format!("{prefix}{name}"))
                    .map(|id| file.get(id).clone())
                    .ok_or_else(|| Error::format(path, format!("missing optimizer moment for `{name}`")))
            };
            state.adam.m[k] = moment("adam.m.")?;
            state.adam.v[k] = moment("adam.v.")?;
        }
    }
    Ok(state)
}
