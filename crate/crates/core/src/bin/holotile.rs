use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};
use holotile::commands::{
    self, bench_csv, AblateArgs, BenchArgs, OracleArgs, SynthesizeArgs, TrainArgs,
};

/// Tiled phase-only hologram synthesis.
#[derive(Parser)]
#[command(name = "holotile", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a hologram for one image and report PSNR/SSIM.
    Synthesize(SynthesizeArgs),
    /// Train the tiled pipeline on a directory of images.
    Train(TrainArgs),
    /// Compare the full model against component ablations
    /// (asm-low-def, sr-none, no-grn, no-lfm, no-eccm).
    Ablate(AblateArgs),
    /// Time inference and measure per-stage memory across sizes and scales.
    Bench(BenchArgs),
    /// Run the numerical oracle suites; exit 1 on any failure.
    OracleCheck(OracleArgs),
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

fn run(cli: Cli) -> holotile::Result<u8> {
    holotile::io::init_threads()?;
    let text = match cli.command {
        Command::Synthesize(a) => {
            let r = commands::cmd_synthesize(&a)?;
            if a.json { json(&r) } else { r.to_text() }
        }
        Command::Train(a) => {
            let r = commands::cmd_train(&a)?;
            if a.json { json(&r) } else { r.to_text() }
        }
        Command::Ablate(a) => {
            let r = commands::cmd_ablate(&a)?;
            if a.json { json(&r) } else { r.to_text() }
        }
        Command::Bench(a) => {
            let r = commands::cmd_bench(&a)?;
            if a.json {
                json(&r)
            } else if a.csv.is_some() {
                r.to_text()
            } else {
                r.to_text() + "\n" + &bench_csv(&r)
            }
        }
        Command::OracleCheck(a) => {
            let r = commands::cmd_oracle_check(&a)?;
            print!("{}", if a.json { json(&r) } else { r.to_text() });
            return Ok(if r.passed() { 0 } else { 1 });
        }
    };
    print!("{text}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
