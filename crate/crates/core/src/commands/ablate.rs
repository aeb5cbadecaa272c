use std::path::PathBuf;

use ndarray::Array2;
use serde::Serialize;

use super::{clamp01, config_or_default, ensure_dir, load_dataset};
use crate::error::Result;
use crate::fixtures;
use crate::io::RunConfig;
use crate::metrics::{psnr, ssim};
use crate::optimize::{
    forward_pipeline, load_state, save_state, train, MergeKind, PipelineConfig, PipelineParams, PropagationMode,
    TrainState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Sub-holograms propagated separately on the coarse grid at pitch p*r.
    AsmLowDef,
    /// Merge by plain pixel shuffle, no merge network.
    SrNone,
    /// Merge network without global response normalization.
    NoGrn,
    /// Merge network without the local feature modulation branch.
    NoLfm,
    /// Merge network without the channel mixing branch.
    NoEccm,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::AsmLowDef,
        Scenario::SrNone,
        Scenario::NoGrn,
        Scenario::NoLfm,
        Scenario::NoEccm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::AsmLowDef => "asm-low-def",
            Scenario::SrNone => "sr-none",
            Scenario::NoGrn => "no-grn",
            Scenario::NoLfm => "no-lfm",
            Scenario::NoEccm => "no-eccm",
        }
    }

    /// `base` with this component removed.
    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        match self {
            Scenario::AsmLowDef => cfg.propagation = PropagationMode::LowDefinition,
            Scenario::SrNone => cfg.merge = MergeKind::Shuffle,
            Scenario::NoGrn => cfg.lfmn.use_grn = false,
            Scenario::NoLfm => cfg.lfmn.use_lfm = false,
            Scenario::NoEccm => cfg.lfmn.use_eccm = false,
        }
        cfg
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct AblateArgs {
    /// Scenarios to compare against the full model (all when omitted).
    #[arg(long = "scenario", value_enum, value_delimiter = ',')]
    pub scenarios: Vec<Scenario>,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluation and training images; the synthetic fixtures when omitted.
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    /// Number of synthetic fixture images.
    #[arg(long, default_value_t = 8)]
    pub fixtures: usize,
    /// Side length of the synthetic fixture images.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Training steps per scenario; overrides `train.steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-scenario states `<name>.ckpt`: loaded when present, written after training otherwise.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub scenario: String,
    /// Mean over images of the single-channel PSNR.
    pub psnr_db: f64,
    pub ssim: f64,
    /// True when weights came from an existing checkpoint.
    pub loaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub images: usize,
    pub steps: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, scenario: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<12} {:>10} {:>8}\n", "scenario", "psnr_db", "ssim");
        for r in &self.rows {
            s += &format!("{:<12} {:>10.4} {:>8.4}\n", r.scenario, r.psnr_db, r.ssim);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,psnr_db,ssim\n");
        for r in &self.rows {
            s += &format!("{},{:e},{:e}\n", r.scenario, r.psnr_db, r.ssim);
        }
        s
    }
}

/// Mean PSNR and SSIM of the clamped reconstructions over `dataset`.
pub fn evaluate(dataset: &[Array2<f64>], params: &PipelineParams, cfg: &PipelineConfig) -> Result<(f64, f64)> {
    let mut p = 0.0;
    let mut s = 0.0;
    for img in dataset {
        let out = forward_pipeline(img, params, cfg)?;
        let rec = clamp01(&out.reconstruction);
        p += psnr(rec.view(), img.view())?;
        s += ssim(rec.view(), img.view())?;
    }
    let n = dataset.len() as f64;
    Ok((p / n, s / n))
}

fn run_scenario(
    name: &str,
    cfg: &PipelineConfig,
    run: &RunConfig,
    dataset: &[Array2<f64>],
    steps: usize,
    args: &AblateArgs,
) -> Result<AblationRow> {
    let cached = args.checkpoint_dir.as_ref().map(|d| d.join(format!("{name}.ckpt")));
    let (params, loaded) = match &cached {
        Some(path) if path.exists() => (load_state(path, cfg, run.train.adam)?.params, true),
        _ => {
            let mut state = TrainState::new(PipelineParams::init(cfg, run.seed)?, run.train.adam);
            train(dataset, &mut state, cfg, &run.train, run.seed, steps)?;
            if let Some(path) = &cached {
                save_state(path, &state)?;
            }
            (state.params, false)
        }
    };
    let (psnr_db, ssim) = evaluate(dataset, &params, cfg)?;
    Ok(AblationRow {
        scenario: name.to_string(),
        psnr_db,
        ssim,
        loaded,
    })
}

/// Trains (or loads) the full model and every requested ablation with the
/// same seed, data and schedule, and scores each on the dataset.
pub fn cmd_ablate(args: &AblateArgs) -> Result<AblationReport> {
    let mut run = config_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        run.seed = seed;
    }
    let steps = args.steps.unwrap_or(run.train.steps);
    run.train.steps = steps;
    let base = run.pipeline_for(run.image.channel)?;
    let dataset = match &args.dataset_dir {
        Some(dir) => load_dataset(dir, &run)?,
        None => {
            let d = base.divisor();
            let side = (args.size / d).max(1) * d;
            fixtures::dataset(args.fixtures.max(1), side, side)
        }
    };
    if let Some(dir) = &args.checkpoint_dir {
        ensure_dir(dir)?;
    }
    let scenarios = if args.scenarios.is_empty() {
        Scenario::ALL.to_vec()
    } else {
        args.scenarios.clone()
    };

    let mut rows = vec![run_scenario("full", &base, &run, &dataset, steps, args)?];
    for sc in scenarios {
        rows.push(run_scenario(sc.name(), &sc.apply(&base), &run, &dataset, steps, args)?);
    }
    Ok(AblationReport {
        images: dataset.len(),
        steps,
        rows,
    })
}
