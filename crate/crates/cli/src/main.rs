use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use a2g_core::dataset::write_dataset;
use a2g_core::delayline::DelayWindow;
use a2g_core::pipeline::{run_analysis, RunConfig, Stage};
use a2g_core::report::{parse_report, render_tables, TableFormat};
use a2g_core::synth::{generate_dataset, write_ground_truth, SynthConfig};
use a2g_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_PIPELINE: u8 = 3;
const EXIT_IO: u8 = 4;

/// Air-to-ground MIMO channel measurement toolkit.
#[derive(Parser)]
#[command(name = "a2g", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Synth {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the full analysis pipeline on a dataset directory.
    Analyze {
        dataset: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// CMD stationarity threshold.
        #[arg(long, default_value_t = 0.20)]
        gamma: f64,
        /// Large-scale averaging window in wavelengths.
        #[arg(long = "ls-lambda", alias = "ls-window-lambda", default_value_t = 60.0)]
        ls_lambda: f64,
        /// SNR used for spectral efficiency, dB.
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
        /// Snapshots per correlation-matrix window.
        #[arg(long, default_value_t = 50)]
        corr_window: usize,
        /// PDP noise gate below the peak, dB.
        #[arg(long, default_value_t = 25.0)]
        noise_gate_db: f64,
        #[arg(long, default_value_t = 5)]
        n_bands: usize,
        /// Evaluate every n-th anchor of the stationarity grid.
        #[arg(long, default_value_t = 1)]
        anchor_stride: usize,
        /// Minimum height for the K(h) regression, m.
        #[arg(long, default_value_t = 10.0)]
        h_min: f64,
        /// Delay-domain window: rectangular or hann.
        #[arg(long, default_value = "rectangular")]
        delay_window: String,
        /// Cap on envelope samples used for distribution fitting.
        #[arg(long)]
        fit_max_samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker thread cap.
        #[arg(long)]
        threads: Option<usize>,
        /// Optional stage to skip (stationarity, delayline, fading, metrics); repeatable.
        #[arg(long)]
        skip: Vec<String>,
    },
    /// Render the summary tables of a report.
    Report {
        report: PathBuf,
        #[arg(long, default_value = "md")]
        format: String,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn synth(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = SynthConfig::from_json(&read_text(config)?).map_err(Failure::config)?;
    let (ds, truth) = generate_dataset(&cfg).map_err(|e| match e {
        Error::Io(_) => Failure::io(out, e),
        e => Failure::config(e),
    })?;
    write_dataset(out, &ds).map_err(|e| Failure::io(out, e))?;
    write_ground_truth(&out.join("ground_truth.json"), &truth).map_err(|e| Failure::io(out, e))?;
    log::info!("wrote {} snapshots to {}", ds.n_snapshots(), out.display());
    Ok(())
}

fn analyze(dataset: &Path, out: &Path, cfg: RunConfig) -> Result<(), Failure> {
    cfg.validate().map_err(Failure::config)?;
    run_analysis(dataset, out, &cfg).map_err(|e| Failure {
        code: match e.source {
            Error::Io(_) => EXIT_IO,
            _ => EXIT_PIPELINE,
        },
        message: e.to_string(),
    })?;
    Ok(())
}

fn report(path: &Path, format: &str) -> Result<(), Failure> {
    let format: TableFormat = format.parse().map_err(Failure::config)?;
    let value = parse_report(&read_text(path)?).map_err(Failure::config)?;
    print!("{}", render_tables(&value, format));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { config, out } => synth(&config, &out),
        Command::Analyze {
            dataset,
            out,
            gamma,
            ls_lambda,
            snr_db,
            corr_window,
            noise_gate_db,
            n_bands,
            anchor_stride,
            h_min,
            delay_window,
            fit_max_samples,
            seed,
            threads,
            skip,
        } => {
            let delay_window: DelayWindow = delay_window.parse().map_err(Failure::config)?;
            let skip = skip
                .iter()
                .map(|s| s.parse::<Stage>())
                .collect::<Result<_, _>>()
                .map_err(Failure::config)?;
            let cfg = RunConfig {
                gamma,
                ls_window_lambda: ls_lambda,
                corr_window,
                snr_db,
                noise_gate_db,
                n_bands,
                anchor_stride,
                h_min_m: h_min,
                delay_window,
                fit_max_samples,
                seed,
                skip,
                threads,
            };
            analyze(&dataset, &out, cfg)
        }
        Command::Report { report: path, format } => report(&path, &format),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
