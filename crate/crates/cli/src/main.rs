//! `scalebreak`: simulate piecewise processes, detect changes of scaling
//! exponent in CSV data and run replicate studies.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
//! failure, 4 I/O error.

mod config;
mod csvio;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use scalebreak::pipeline::{analyze, AnalysisConfig, RateRule, ScaleRule};
use scalebreak::synth::{simulate_piecewise, Family};
use scalebreak::wavelet::WaveletKind;

use config::{config_hash, parse_band, parse_list, parse_wavelet, RunConfig};
use csvio::Stamp;

/// Version of the JSON documents written by this tool.
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<scalebreak::Error> for CliError {
    fn from(e: scalebreak::Error) -> Self {
        let msg = e.to_string();
        let hint = match e {
            scalebreak::Error::MarginsSwallowSegment { .. } => "; lower the shrink rate with --rate or --kappa",
            scalebreak::Error::Infeasible(_) => "; relax --min-len, refine --stride or lower --m",
            scalebreak::Error::SegmentTooShort { .. } | scalebreak::Error::WindowOutOfRange { .. } => {
                "; use fewer scales (--ell) or a smaller base scale (--scale)"
            }
            _ => "",
        };
        if e.is_validation() {
            CliError::Validation(format!("{msg}{hint}"))
        } else {
            CliError::Numeric(msg)
        }
    }
}

#[derive(Parser)]
#[command(name = "scalebreak", version, about = "Detect abrupt changes in the scaling exponent of a sampled path")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a piecewise path and write it as CSV (t, x) with a JSON sidecar.
    Simulate {
        #[command(flatten)]
        opts: Opts,
    },
    /// Detect change points in a CSV path and estimate the exponent on each segment.
    Detect {
        /// One value per row, or two columns (t, x) on a uniform grid.
        input: PathBuf,
        /// Plot data path; defaults to the output path with extension plot.csv.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Repeat simulation and detection; write per-replicate rows and summaries.
    Montecarlo {
        #[command(flatten)]
        opts: Opts,
    },
}

/// A comma-separated list; the empty string is the empty list.
#[derive(Clone)]
struct Numbers(Vec<f64>);

fn parse_numbers(s: &str) -> Result<Numbers, String> {
    parse_list(s).map(Numbers)
}

#[derive(Args)]
struct Opts {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// fgn, farima, fbm or locfrac.
    #[arg(long)]
    family: Option<Family>,
    /// Number of change points to detect.
    #[arg(long)]
    m: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    /// Sampling step.
    #[arg(long)]
    delta: Option<f64>,
    /// Change fractions, comma separated.
    #[arg(long, value_parser = parse_numbers)]
    tau: Option<Numbers>,
    /// Exponent of each regime, comma separated.
    #[arg(long, value_parser = parse_numbers)]
    exponents: Option<Numbers>,
    /// Frequency band f_min,f_max of the locally fractional family.
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    /// Number of scales.
    #[arg(long)]
    ell: Option<usize>,
    /// Tuning exponent of the scale and shrink-rate schedules.
    #[arg(long)]
    kappa: Option<f64>,
    /// poly:<q> or band:<lambda>,<mu>.
    #[arg(long, value_parser = parse_wavelet)]
    wavelet: Option<WaveletKind>,
    /// Explicit base scale in time units.
    #[arg(long)]
    scale: Option<f64>,
    /// Explicit shrink rate.
    #[arg(long)]
    rate: Option<f64>,
    /// Shrink rate N^e.
    #[arg(long, conflicts_with = "rate")]
    rate_exponent: Option<f64>,
    /// Minimal segment length in time units.
    #[arg(long)]
    min_len: Option<f64>,
    /// Candidate spacing in time units.
    #[arg(long)]
    stride: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicates.
    #[arg(long)]
    reps: Option<usize>,
}

impl Opts {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            family: self.family,
            tau: self.tau.clone().map(|l| l.0),
            exponents: self.exponents.clone().map(|l| l.0),
            band: self.band,
            n: self.n,
            delta: self.delta,
            m: self.m,
            ell: self.ell,
            kappa: self.kappa,
            wavelet: self.wavelet,
            scale: self.scale.map(ScaleRule::Fixed),
            rate: self.rate.map(RateRule::Fixed).or(self.rate_exponent.map(RateRule::Exponent)),
            min_len: self.min_len,
            stride: self.stride,
            seed: self.seed,
            reps: self.reps,
            ..Default::default()
        };
        Ok(file.merged(flags))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'a str,
    version: u32,
    config_sha256: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

/// Fixed numerical tolerances that shape the estimates.
#[derive(Serialize)]
struct Numerics {
    gamma_ridge: f64,
    gamma_lag_sum_tol: f64,
    exponent_clamp: (f64, f64),
    wavelet_support_threshold: f64,
    wavelet_moment_tol: f64,
}

impl Numerics {
    fn current() -> Self {
        Numerics {
            gamma_ridge: scalebreak::estimate::RIDGE,
            gamma_lag_sum_tol: scalebreak::gamma::LAG_SUM_TOL,
            exponent_clamp: scalebreak::estimate::EXPONENT_CLAMP,
            wavelet_support_threshold: scalebreak::wavelet::SUPPORT_THRESHOLD,
            wavelet_moment_tol: scalebreak::wavelet::MOMENT_TOL,
        }
    }
}

fn simulate(opts: &Opts) -> Result<(), CliError> {
    let d = opts.run_config()?.resolve()?;
    let hash = config_hash(&d);
    let path = simulate_piecewise(&d.spec, d.n, d.delta, d.seed)?;
    csvio::write_path(&opts.out, &path, &Stamp { command: "simulate", hash: &hash, seed: d.seed })?;

    #[derive(Serialize)]
    struct Meta<'a> {
        spec: &'a scalebreak::synth::PiecewiseSpec,
        n: usize,
        delta: f64,
        data: String,
    }
    let meta = Meta { spec: &d.spec, n: d.n, delta: d.delta, data: file_name(&opts.out) };
    let sidecar = opts.out.with_extension("meta.json");
    write_json(
        &sidecar,
        &Envelope { schema: "scalebreak.simulate", version: SCHEMA_VERSION, config_sha256: &hash, seed: d.seed, body: meta },
    )?;
    println!("wrote {} samples to {} and metadata to {}", path.values.len(), opts.out.display(), sidecar.display());
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn detect(input: &Path, plot: Option<&Path>, opts: &Opts) -> Result<(), CliError> {
    let rc = opts.run_config()?;
    let mut d = rc.resolve()?;
    let path = csvio::read_path(input, d.delta)?;
    if let Some(n) = rc.n {
        if n != path.n() {
            return Err(CliError::Validation(format!(
                "configuration expects n = {n} samples but {} holds {}",
                input.display(),
                path.n()
            )));
        }
    }
    d.n = path.n();
    d.delta = path.delta;
    let hash = config_hash(&d);
    let report = analyze(&path, &d.analysis)?;

    #[derive(Serialize)]
    struct Body<'a> {
        input: String,
        n: usize,
        delta: f64,
        analysis: &'a AnalysisConfig,
        numerics: Numerics,
        report: &'a scalebreak::pipeline::AnalysisReport,
    }
    let body = Body {
        input: file_name(input),
        n: path.n(),
        delta: path.delta,
        analysis: &d.analysis,
        numerics: Numerics::current(),
        report: &report,
    };
    write_json(
        &opts.out,
        &Envelope { schema: "scalebreak.detect", version: SCHEMA_VERSION, config_sha256: &hash, seed: d.seed, body },
    )?;
    let plot_path = plot.map(Path::to_path_buf).unwrap_or_else(|| opts.out.with_extension("plot.csv"));
    csvio::write_plot(&plot_path, &report.plot_rows(), &Stamp { command: "detect", hash: &hash, seed: d.seed })?;

    let taus: Vec<String> = report.change_points.tau_hat.iter().map(|t| format!("{t:.4}")).collect();
    println!("change fractions: [{}]", taus.join(", "));
    for s in &report.segments {
        let fgls = s.exponent_fgls.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into());
        println!("segment {} [{:.4}, {:.4}): exponent ols {:.4} fgls {fgls}", s.index, s.start, s.end, s.exponent_ols);
    }
    println!("wrote {} and {}", opts.out.display(), plot_path.display());
    Ok(())
}

fn montecarlo(opts: &Opts) -> Result<(), CliError> {
    let d = opts.run_config()?.resolve()?;
    let hash = config_hash(&d);
    let r = scalebreak::montecarlo::run(&d)?;
    let m = d.spec.tau_stars.len();
    csvio::write_montecarlo(&opts.out, &r, m, &Stamp { command: "montecarlo", hash: &hash, seed: d.seed })?;
    println!("{:<10} {:>8} {:>8} {:>8} {:>8}", "quantity", "truth", "mean", "sd", "rmse");
    for s in &r.summary {
        println!("{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", s.quantity, s.truth, s.mean, s.sd, s.rmse);
    }
    println!("wrote {} replicates to {}", r.replicates.len(), opts.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate { opts } => simulate(opts),
        Command::Detect { input, plot, opts } => detect(input, plot.as_deref(), opts),
        Command::Montecarlo { opts } => montecarlo(opts),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scalebreak: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
