//! Library side of the `holotile` command-line tool.
//!
//! Each subcommand is a plain function taking a `clap`-derived argument
//! struct, so the binary stays a thin dispatcher and tests can call the same
//! code in-process.

mod ablate;
mod bench;
mod oracle;
mod synthesize;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::{load_config, parse_config, RunConfig};

pub use ablate::{cmd_ablate, evaluate, AblateArgs, AblationReport, AblationRow, Scenario};
pub use bench::{bench_csv, cmd_bench, network_forward, BenchArgs, BenchReport, BenchRow, BENCH_CSV_HEADER};
pub use oracle::{cmd_oracle_check, run_oracle_checks, CheckOutcome, OracleArgs, OracleReport};
pub use synthesize::{cmd_synthesize, Method, SynthesisRow, SynthesizeArgs, SynthesizeReport};
pub use train::{cmd_train, load_dataset, TrainArgs, TrainReport};

/// Reads `path` if given, otherwise the all-defaults document.
pub fn config_or_default(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => parse_config("", Path::new("<defaults>")),
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Image files (`.png`, `.pgm`) directly inside `dir`, sorted by name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn clamp01(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.clamp(0.0, 1.0))
}
