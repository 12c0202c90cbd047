//! `nucleus-gt`: batch segmentation, evaluation, alpha sweeps, phantom
//! generation, session audits and the annotation server.
//!
//! Exit status is 0 on success, 1 for usage or I/O errors and 2 when the
//! run finished but some inputs could not be processed.

mod batch;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "nucleus-gt", version, about = "White-blood-cell nucleus ground-truth tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment every image in a folder and write one mask per image.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = nucleus_core::DEFAULT_ALPHA, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        offset: i32,
    },
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Score the segmentation over a grid of alpha values.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Grid as start:stop:step, stop inclusive.
        #[arg(long, default_value = "0:1:0.1")]
        alphas: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write synthetic smear images with their ground-truth masks.
    Phantom {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        /// Side length in pixels.
        #[arg(long, default_value_t = nucleus_core::phantom::DEFAULT_SIZE)]
        size: u32,
    },
    /// Check that a session folder agrees with its sidecar.
    Audit {
        #[arg(long)]
        folder: PathBuf,
    },
    /// Serve the annotation API (and UI bundle, if given) for one folder.
    Serve {
        #[arg(long)]
        folder: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = nucleus_core::DEFAULT_ALPHA, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory holding the static UI bundle.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("alpha must be in [0,1]".into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Segment { input, output, alpha, offset } => batch::segment(&input, &output, alpha, offset),
        Command::Eval { pred, gt } => batch::eval(&pred, &gt),
        Command::Sweep { input, gt, alphas, format } => batch::sweep(&input, &gt, &alphas, matches!(format, Format::Json)),
        Command::Phantom { count, seed, output, size } => batch::phantom(count, seed, &output, size),
        Command::Audit { folder } => batch::audit(&folder),
        Command::Serve { folder, port, alpha, host, ui } => serve::run(&folder, host, port, alpha, ui),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
