use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use super::{config_or_default, ensure_dir, image_files};
use crate::error::{Error, Result};
use crate::io::RunConfig;
use crate::optimize::{load_state, save_state, train, write_loss_csv, PipelineParams, TrainState};

#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    /// Directory of PNG/PGM training images, read in file-name order.
    #[arg(long)]
    pub dataset_dir: PathBuf,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Steps to run in this invocation; overrides `train.steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where the trained state (weights, optimizer moments, step) is written.
    #[arg(long)]
    pub checkpoint_out: PathBuf,
    /// Continue from a state written by a previous run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Loss curve destination; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub images: usize,
    pub first_step: usize,
    pub last_step: usize,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    pub seconds: f64,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let fmt = |l: Option<f64>| l.map_or("-".to_string(), |v| format!("{v:.6}"));
        format!(
            "train images={} steps={}..{} loss {} -> {} seconds={:.1}\ncheckpoint {}\nloss curve {}\n",
            self.images,
            self.first_step,
            self.last_step,
            fmt(self.first_loss),
            fmt(self.last_loss),
            self.seconds,
            self.checkpoint.display(),
            self.loss_csv.display()
        )
    }
}

/// Loads every image of `dir` as a training target for the configured channel.
pub fn load_dataset(dir: &Path, run: &RunConfig) -> Result<Vec<Array2<f64>>> {
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(Error::config(
            "train.dataset",
            format!("no PNG or PGM images in {}", dir.display()),
        ));
    }
    files.iter().map(|f| run.load_target(f, run.image.channel)).collect()
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainReport> {
    let mut run = config_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        run.seed = seed;
    }
    let steps = args.steps.unwrap_or(run.train.steps);
    let cfg = run.pipeline_for(run.image.channel)?;
    let dataset = load_dataset(&args.dataset_dir, &run)?;

    let mut state = match &args.resume {
        Some(path) => load_state(path, &cfg, run.train.adam)?,
        None => TrainState::new(PipelineParams::init(&cfg, run.seed)?, run.train.adam),
    };
    let first_step = state.step;
    let start = Instant::now();
    let curve = train(&dataset, &mut state, &cfg, &run.train, run.seed, first_step + steps)?;
    let seconds = start.elapsed().as_secs_f64();

    if let Some(parent) = args.checkpoint_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_state(&args.checkpoint_out, &state)?;
    let loss_csv = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| args.checkpoint_out.with_extension("loss.csv"));
    write_loss_csv(&loss_csv, &curve)?;

    Ok(TrainReport {
        images: dataset.len(),
        first_step,
        last_step: state.step,
        first_loss: curve.first().map(|p| p.loss),
        last_loss: curve.last().map(|p| p.loss),
        seconds,
        checkpoint: args.checkpoint_out.clone(),
        loss_csv,
    })
}
