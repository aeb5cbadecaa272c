use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use super::{clamp01, config_or_default, ensure_dir, write_text};
use crate::autodiff::optimal_scale;
use crate::encoding::PhaseMap;
use crate::error::Result;
use crate::io::{save_gray8, save_image, Channel, RunConfig};
use crate::metrics::{psnr, ssim};
use crate::optimize::{
    dpac_hologram, forward_pipeline, gs_iterate, load_state, reconstruct, sgd_hologram, untiled_forward, Optics,
    PipelineConfig, PipelineParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Tiled network pipeline (weights from --checkpoint, else seeded init).
    Pipeline,
    /// Same networks without tiling; needs `pipeline.scale = 1`.
    Untiled,
    /// Per-image gradient descent on the phase.
    Sgd,
    /// Gerchberg-Saxton iterations.
    Gs,
    /// Double phase-amplitude coding of the propagated target.
    Dpac,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pipeline => "pipeline",
            Method::Untiled => "untiled",
            Method::Sgd => "sgd",
            Method::Gs => "gs",
            Method::Dpac => "dpac",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct SynthesizeArgs {
    /// Target image (PNG or PGM).
    #[arg(long)]
    pub image: PathBuf,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Pipeline)]
    pub method: Method,
    /// Directory for the PNGs and `metrics.csv`; created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Pipeline weights; overrides `paths.checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Channels to synthesize, e.g. `r,g,b`; defaults to `image.channel`.
    #[arg(long = "channel", value_delimiter = ',')]
    pub channels: Vec<Channel>,
    /// Run the per-channel syntheses concurrently.
    #[arg(long)]
    pub parallel_channels: bool,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

/// Quality of one synthesized channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisRow {
    pub method: &'static str,
    pub channel: Channel,
    pub height: usize,
    pub width: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub gain: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesizeReport {
    pub rows: Vec<SynthesisRow>,
    /// Mean of the per-channel PSNRs.
    pub mean_psnr_db: f64,
    pub files: Vec<PathBuf>,
}

impl SynthesizeReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s += &format!(
                "synthesize method={} channel={} size={}x{} psnr={:.4} ssim={:.4} gain={:.4} seconds={:.3}\n",
                r.method,
                channel_name(r.channel),
                r.height,
                r.width,
                r.psnr_db,
                r.ssim,
                r.gain,
                r.seconds
            );
        }
        s
    }
}

fn channel_name(c: Channel) -> &'static str {
    match c {
        Channel::R => "r",
        Channel::G => "g",
        Channel::B => "b",
        Channel::Gray => "gray",
    }
}

struct Synthesis {
    row: SynthesisRow,
    hologram: PhaseMap,
    reconstruction: Array2<f64>,
}

fn baseline_reconstruction(
    hologram: &PhaseMap,
    target: &Array2<f64>,
    cfg: &PipelineConfig,
) -> Result<(Array2<f64>, f64)> {
    let optics = Optics::new(cfg, target.nrows(), target.ncols())?;
    let amp = reconstruct(hologram.phase(), &optics.backward)?;
    let gain = optimal_scale(
        amp.as_standard_layout().as_slice().expect("standard layout"),
        target.as_standard_layout().as_slice().expect("standard layout"),
    );
    Ok((amp.mapv(|a| a * gain), gain))
}

fn synthesize_channel(
    run: &RunConfig,
    args: &SynthesizeArgs,
    channel: Channel,
    weights: Option<&PipelineParams>,
) -> Result<Synthesis> {
    let cfg = run.pipeline_for(channel)?;
    let target = run.load_target(&args.image, channel)?;
    let start = Instant::now();
    let (hologram, reconstruction, gain) = match args.method {
        Method::Pipeline | Method::Untiled => {
            let params = weights.expect("weights are prepared for network methods");
            let out = if args.method == Method::Pipeline {
                forward_pipeline(&target, params, &cfg)?
            } else {
                untiled_forward(&target, params, &cfg)?
            };
            (out.hologram, out.reconstruction, out.gain)
        }
        Method::Sgd => {
            let h = sgd_hologram(&target, &cfg, &run.sgd, run.seed)?.hologram;
            let (rec, gain) = baseline_reconstruction(&h, &target, &cfg)?;
            (h, rec, gain)
        }
        Method::Gs => {
            let h = gs_iterate(&target, &cfg, run.gs.iters, run.seed)?.hologram;
            let (rec, gain) = baseline_reconstruction(&h, &target, &cfg)?;
            (h, rec, gain)
        }
        Method::Dpac => {
            let h = dpac_hologram(&target, &cfg)?;
            let (rec, gain) = baseline_reconstruction(&h, &target, &cfg)?;
            (h, rec, gain)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let shown = clamp01(&reconstruction);
    let row = SynthesisRow {
        method: args.method.name(),
        channel,
        height: target.nrows(),
        width: target.ncols(),
        psnr_db: psnr(shown.view(), target.view())?,
        ssim: ssim(shown.view(), target.view())?,
        gain,
        seconds,
    };
    Ok(Synthesis {
        row,
        hologram,
        reconstruction: shown,
    })
}

/// Synthesizes one hologram per requested channel and writes
/// `hologram[_c].png` (8-bit phase), `reconstruction[_c].png` and
/// `metrics.csv` into the output directory.
pub fn cmd_synthesize(args: &SynthesizeArgs) -> Result<SynthesizeReport> {
    let mut run = config_or_default(args.config.as_deref())?;
    if let Some(ck) = &args.checkpoint {
        run.paths.checkpoint = Some(ck.clone());
    }
    let channels = if args.channels.is_empty() {
        vec![run.image.channel]
    } else {
        args.channels.clone()
    };
    let weights = match args.method {
        Method::Pipeline | Method::Untiled => Some(match &run.paths.checkpoint {
            Some(path) => load_state(path, &run.pipeline, run.train.adam)?.params,
            None => PipelineParams::init(&run.pipeline, run.seed)?,
        }),
        _ => None,
    };

    let one = |c: &Channel| synthesize_channel(&run, args, *c, weights.as_ref());
    let results: Vec<Synthesis> = if args.parallel_channels {
        channels.par_iter().map(one).collect::<Result<_>>()?
    } else {
        channels.iter().map(one).collect::<Result<_>>()?
    };

    ensure_dir(&args.out_dir)?;
    let mut files = Vec::new();
    let mut csv = String::from("method,channel,height,width,psnr_db,ssim,gain\n");
    for s in &results {
        let suffix = if results.len() > 1 {
            format!("_{}", channel_name(s.row.channel))
        } else {
            String::new()
        };
        let holo = args.out_dir.join(format!("hologram{suffix}.png"));
        save_gray8(&holo, &s.hologram.to_gray8())?;
        let rec = args.out_dir.join(format!("reconstruction{suffix}.png"));
        save_image(&rec, &s.reconstruction)?;
        files.push(holo);
        files.push(rec);
        let r = &s.row;
        csv += &format!(
            "{},{},{},{},{:e},{:e},{:e}\n",
            r.method,
            channel_name(r.channel),
            r.height,
            r.width,
            r.psnr_db,
            r.ssim,
            r.gain
        );
    }
    let metrics = args.out_dir.join("metrics.csv");
    write_text(&metrics, &csv)?;
    files.push(metrics);

    let rows: Vec<SynthesisRow> = results.into_iter().map(|s| s.row).collect();
    let mean_psnr_db = rows.iter().map(|r| r.psnr_db).sum::<f64>() / rows.len() as f64;
    Ok(SynthesizeReport {
        rows,
        mean_psnr_db,
        files,
    })
}
