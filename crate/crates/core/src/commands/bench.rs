use std::path::PathBuf;

use ndarray::{Array2, Array4, Axis};
use serde::Serialize;

use super::{config_or_default, write_text};
use crate::autodiff::Tape;
use crate::error::Result;
use crate::fixtures;
use crate::metrics::{stopwatch, LedgerReport, MemoryLedger, Stage};
use crate::nnets::{encoder_forward, generator_forward, lfmn_forward, pyramid_merge};
use crate::optimize::{build_pipeline, forward_pipeline, Merge, Optics, PipelineConfig, PipelineParams};

pub const BENCH_CSV_HEADER: &str = "size,scale,median_seconds,fps,network_seconds,network_fps,\
asm_peak_bytes,generator_peak_bytes,encoder_peak_bytes,merge_sr_peak_bytes,autodiff_tape_peak_bytes,total_peak_bytes";

#[derive(Debug, Clone, clap::Args)]
pub struct BenchArgs {
    /// Square grid sizes in pixels.
    #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
    pub sizes: Vec<usize>,
    /// Tiling factors.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub scales: Vec<usize>,
    /// Timed repetitions per cell; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the table as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub scale: usize,
    /// Median wall time of one full inference (networks and propagation).
    pub median_seconds: f64,
    pub fps: f64,
    /// Median wall time of the generator, encoder and merge networks alone.
    pub network_seconds: f64,
    pub network_fps: f64,
    /// Per-stage peaks of one training step (forward and backward).
    pub ledger: LedgerReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, size: usize, scale: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.size == size && r.scale == scale)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>5} {:>2} {:>11} {:>9} {:>11} {:>9} {:>11} {:>11} {:>11} {:>11} {:>11}\n",
            "size", "r", "median_s", "fps", "network_s", "net_fps", "asm_MiB", "gen_MiB", "enc_MiB", "merge_MiB", "tape_MiB"
        );
        let mib = |b: usize| b as f64 / (1024.0 * 1024.0);
        for r in &self.rows {
            let l = &r.ledger;
            s += &format!(
                "{:>5} {:>2} {:>11.5} {:>9.2} {:>11.5} {:>9.2} {:>11.2} {:>11.2} {:>11.2} {:>11.2} {:>11.2}\n",
                r.size,
                r.scale,
                r.median_seconds,
                r.fps,
                r.network_seconds,
                r.network_fps,
                mib(l.peak(Stage::Asm)),
                mib(l.peak(Stage::Generator)),
                mib(l.peak(Stage::Encoder)),
                mib(l.peak(Stage::MergeSr)),
                mib(l.peak(Stage::AutodiffTape)),
            );
        }
        s
    }
}

pub fn bench_csv(report: &BenchReport) -> String {
    let mut s = format!("{BENCH_CSV_HEADER}\n");
    for r in &report.rows {
        let l = &r.ledger;
        s += &format!(
            "{},{},{:e},{:e},{:e},{:e},{},{},{},{},{},{}\n",
            r.size,
            r.scale,
            r.median_seconds,
            r.fps,
            r.network_seconds,
            r.network_fps,
            l.peak(Stage::Asm),
            l.peak(Stage::Generator),
            l.peak(Stage::Encoder),
            l.peak(Stage::MergeSr),
            l.peak(Stage::AutodiffTape),
            l.total_peak
        );
    }
    s
}

/// Runs only the learned stages (generator, encoder, merge) on inputs of the
/// shapes the pipeline would feed them for an `image` of the configured scale.
pub fn network_forward(image: &Array2<f64>, params: &PipelineParams, cfg: &PipelineConfig) -> Result<Array4<f64>> {
    let r = cfg.scale;
    let store = &params.store;
    let mut tape = Tape::new();
    let x = tape.constant(image.as_standard_layout().into_owned().insert_axis(Axis(0)).insert_axis(Axis(0)));
    let tiles = tape.pixel_unshuffle(x, r)?;
    let phases = generator_forward(&mut tape, store, &params.generator, tiles)?;
    // stand-in for the propagated sub-fields: the same channel count and grid
    let fields = tape.concat(&[phases, tiles])?;
    let holo = encoder_forward(&mut tape, store, &params.encoder, fields)?;
    let out = match &params.merge {
        Merge::Shuffle => tape.pixel_shuffle(holo, r)?,
        Merge::Lfmn(p) => lfmn_forward(&mut tape, store, p, holo)?,
        Merge::Pyramid(p) => pyramid_merge(&mut tape, store, p, holo)?,
    };
    Ok(tape.value(out).clone())
}

fn training_ledger(image: &Array2<f64>, params: &PipelineParams, cfg: &PipelineConfig) -> Result<LedgerReport> {
    let optics = Optics::new(cfg, image.nrows(), image.ncols())?;
    let ledger = MemoryLedger::new();
    let mut tape = Tape::with_ledger(ledger.clone());
    let g = build_pipeline(&mut tape, image, params, cfg, &optics)?;
    tape.backward(g.loss)?;
    Ok(ledger.report())
}

/// Times inference and measures per-stage memory for every size and scale.
pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport> {
    let run = config_or_default(args.config.as_deref())?;
    let base = run.pipeline_for(run.image.channel)?;
    let repeats = args.repeats.max(1);
    let mut rows = Vec::new();
    for &size in &args.sizes {
        let image = fixtures::image(0, size, size);
        for &scale in &args.scales {
            let cfg = PipelineConfig {
                scale,
                pyramid: base.pyramid && scale == 4,
                ..base.clone()
            };
            cfg.validate()?;
            let params = PipelineParams::init(&cfg, run.seed)?;
            let full = stopwatch(repeats, || forward_pipeline(&image, &params, &cfg));
            forward_pipeline(&image, &params, &cfg)?;
            let net = stopwatch(repeats, || network_forward(&image, &params, &cfg));
            network_forward(&image, &params, &cfg)?;
            rows.push(BenchRow {
                size,
                scale,
                median_seconds: full.median,
                fps: full.fps(),
                network_seconds: net.median,
                network_fps: net.fps(),
                ledger: training_ledger(&image, &params, &cfg)?,
            });
        }
    }
    let report = BenchReport { rows };
    if let Some(path) = &args.csv {
        write_text(path, &bench_csv(&report))?;
    }
    Ok(report)
}
