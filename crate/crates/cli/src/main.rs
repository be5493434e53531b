use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cic_core::engine::{EtaMode, InitMode, SelectMode};
use cic_core::harness::{self, ExperimentConfig};
use cic_core::metrics::DEFAULT_SUBPIXEL_BITS;

#[derive(Parser)]
#[command(name = "cic", version, about = "Closed-loop image compression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare open-loop and closed-loop reconstruction over a dataset.
    Run(ExperimentArgs),
    /// Grid over gain and iteration count.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated gains.
        #[arg(long, value_delimiter = ',')]
        etas: Vec<f64>,
        /// Comma-separated iteration counts.
        #[arg(long = "iters-grid", value_delimiter = ',')]
        iters_grid: Vec<usize>,
    },
    /// Estimate the mean slope and the admissible gain interval.
    Analyze(ExperimentArgs),
    /// Write absolute and thresholded difference images.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = harness::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "cic-out")]
        out: PathBuf,
    },
    /// PSNR, SSIM, rate and flagged pixels between two image files.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// Bitstream size for the rate figures.
        #[arg(long)]
        bits: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_SUBPIXEL_BITS)]
        subpixel_bits: u32,
        #[arg(long, default_value_t = harness::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zero,
    Random,
    Decoded,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaModeArg {
    Manual,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Final,
    BestResidual,
    BestOracle,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image directory, or a single image.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// builtin:<name>?k=v&... or bridge:<command>
    #[arg(long)]
    codec: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Tile edge in pixels.
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long, value_enum)]
    eta_mode: Option<EtaModeArg>,
    #[arg(long, value_enum)]
    select: Option<SelectArg>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Also encode the refined output and report its rate.
    #[arg(long)]
    reencode: bool,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    subpixel_bits: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        let lc = &mut cfg.loop_config;
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &self.codec {
            cfg.codec = v.clone();
        }
        if let Some(v) = self.eta {
            lc.eta = v;
        }
        if let Some(v) = self.dt {
            lc.dt = v;
        }
        if let Some(v) = self.iters {
            lc.max_iters = v;
        }
        if let Some(v) = self.init {
            lc.init = match v {
                InitArg::Zero => InitMode::Zero,
                InitArg::Random => InitMode::Random(0),
                InitArg::Decoded => InitMode::Decoded,
            };
        }
        if let Some(v) = self.tile {
            lc.tile = Some(v);
        }
        if let Some(v) = self.eta_mode {
            lc.eta_mode = match v {
                EtaModeArg::Manual => EtaMode::Manual,
                EtaModeArg::Auto => EtaMode::AutoFromBound,
            };
        }
        if let Some(v) = self.select {
            lc.select = match v {
                SelectArg::Final => SelectMode::Final,
                SelectArg::BestResidual => SelectMode::BestResidual,
                SelectArg::BestOracle => SelectMode::BestOracle,
            };
        }
        if let Some(v) = self.stop_tol {
            lc.stop_tol = v;
        }
        if let Some(v) = self.patience {
            lc.divergence_patience = v;
        }
        if self.reencode {
            cfg.reencode = true;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.subpixel_bits {
            cfg.subpixel_bits = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        Ok(cfg)
    }
}

/// Like `println!`, but a closed stdout is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn fmt(v: f64) -> String {
    harness::report::format_float(v)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let report = harness::cmd_run(&cfg).context("run failed")?;
            let s = &report.summary;
            say!("images: {} ({} failed)", s.images, s.failed);
            if let (Some(mean), Some(max)) = (s.mean, s.max_delta) {
                say!(
                    "psnr  sic {} cic {} delta {} max {}",
                    fmt(mean[0]),
                    fmt(mean[1]),
                    fmt(mean[2]),
                    fmt(max[0])
                );
                say!(
                    "ssim  sic {} cic {} delta {} max {}",
                    fmt(mean[3]),
                    fmt(mean[4]),
                    fmt(mean[5]),
                    fmt(max[1])
                );
                say!(
                    "bpsp  sic {} cic {} delta {} max {}",
                    fmt(mean[6]),
                    fmt(mean[7]),
                    fmt(mean[8]),
                    fmt(max[2])
                );
            }
            say!("report: {}", cfg.out.join("report.csv").display());
        }
        Command::Sweep { exp, etas, iters_grid } => {
            let mut cfg = exp.resolve()?;
            if !etas.is_empty() {
                cfg.eta_grid = etas;
            }
            if !iters_grid.is_empty() {
                cfg.iters_grid = iters_grid;
            }
            let report = harness::cmd_sweep(&cfg).context("sweep failed")?;
            say!("rows: {}", report.rows.len());
            say!("report: {}", cfg.out.join("sweep.csv").display());
        }
        Command::Analyze(args) => {
            let cfg = args.resolve()?;
            let value = harness::cmd_analyze(&cfg).context("analyze failed")?;
            say!("{}", serde_json::to_string_pretty(&value)?);
        }
        Command::Diff { a, b, threshold, out } => {
            let diff = harness::cmd_diff(&a, &b, threshold, &out)?;
            say!("flagged pixels: {}", diff.flagged_pixels());
            say!(
                "written: {} {}",
                out.join("abs.png").display(),
                out.join("logic.png").display()
            );
        }
        Command::Metrics {
            a,
            b,
            bits,
            subpixel_bits,
            threshold,
        } => {
            let value = harness::cmd_metrics(&a, &b, bits, subpixel_bits, threshold)?;
            say!("{}", serde_json::to_string_pretty(&value)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
