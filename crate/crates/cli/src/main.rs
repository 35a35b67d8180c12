//! `gfref`: reference-prior analysis of Gaussian random fields from the command line.

mod commands;
mod config;
mod dataset;
mod failure;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, Resolver};
use crate::failure::{Failure, EXIT_VALIDATION};

#[derive(Parser, Debug)]
#[command(name = "gfref", version, about = "Reference priors and Bayesian inference for isotropic Gaussian random fields")]
struct Cli {
    /// `key = value` file supplying defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, env = "GFREF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate exact, approximate or inverse-gamma priors for θ.
    Prior(PriorArgs),
    /// Sample the posterior of (β, σ², θ) and report estimates with HPD intervals.
    Fit(FitArgs),
    /// Integrated likelihood over a grid of smoothness values.
    SelectNu(SelectNuArgs),
    /// Restricted maximum likelihood estimate of θ.
    Reml(RemlArgs),
    /// Simulate a Gaussian random field on a design.
    Simulate(SimulateArgs),
    /// Frequentist coverage study over simulated replicates.
    Coverage(CoverageArgs),
    /// Empirical semivariogram with a least-squares Matérn fit.
    Semivariogram(SemivariogramArgs),
    /// Time exact against approximate prior evaluations.
    Bench(BenchArgs),
}

/// Spectral-approximation tuning; unset values are derived from the design.
#[derive(Args, Debug, Default)]
pub struct SpectralArgs {
    /// Auxiliary grid points along x.
    #[arg(long)]
    pub m1: Option<usize>,
    /// Auxiliary grid points along y.
    #[arg(long)]
    pub m2: Option<usize>,
    /// Auxiliary grid spacing.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Aliasing truncation radius.
    #[arg(long)]
    pub truncation: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PriorArgs {
    /// CSV with columns x,y[,z][,covariates...].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Replace file covariates with a polynomial trend (constant, linear, quadratic).
    #[arg(long)]
    pub trend: Option<String>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Comma-separated prior kinds: exact, approx, ig.
    #[arg(long)]
    pub kind: Option<String>,
    /// Exact-prior representation (a or b).
    #[arg(long)]
    pub representation: Option<String>,
    #[arg(long)]
    pub ig_shape: Option<f64>,
    #[arg(long)]
    pub ig_scale: Option<f64>,
    /// Normalize each density over (0, ∞).
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub theta_min: Option<f64>,
    #[arg(long)]
    pub theta_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub spectral: SpectralArgs,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub trend: Option<String>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Prior for θ: exact, approx or ig.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub representation: Option<String>,
    #[arg(long)]
    pub ig_shape: Option<f64>,
    #[arg(long)]
    pub ig_scale: Option<f64>,
    /// Number of posterior draws.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// HPD interval level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Run the sampler on the exact marginal instead of its spline.
    #[arg(long)]
    pub exact_marginal: bool,
    /// σ², β conditionals: exact or interpolated.
    #[arg(long)]
    pub conditionals: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub theta_min: Option<f64>,
    #[arg(long)]
    pub theta_max: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub spectral: SpectralArgs,
}

#[derive(Args, Debug)]
pub struct SelectNuArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub trend: Option<String>,
    /// Comma-separated smoothness values.
    #[arg(long)]
    pub nu_grid: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub theta_min: Option<f64>,
    #[arg(long)]
    pub theta_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub spectral: SpectralArgs,
}

#[derive(Args, Debug)]
pub struct RemlArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub trend: Option<String>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// exact or approx (the latter needs a regular grid and constant mean).
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub theta_min: Option<f64>,
    #[arg(long)]
    pub theta_max: Option<f64>,
    /// Also write the fit as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// regular:MxN (unit square), uniform:N[:SEED], or a CSV with x,y columns.
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub trend: Option<String>,
    /// Comma-separated mean coefficients.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CoverageArgs {
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub trend: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Comma-separated prior kinds: exact, approx, ig.
    #[arg(long)]
    pub priors: Option<String>,
    #[arg(long)]
    pub representation: Option<String>,
    #[arg(long)]
    pub ig_shape: Option<f64>,
    #[arg(long)]
    pub ig_scale: Option<f64>,
    /// Leave out the profile-likelihood intervals.
    #[arg(long)]
    pub no_mle: bool,
    /// Also compute profile intervals for σ².
    #[arg(long)]
    pub mle_sigma2_interval: bool,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub refine_points: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub spectral: SpectralArgs,
}

#[derive(Args, Debug)]
pub struct SemivariogramArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub trend: Option<String>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Number of sites (a perfect square with even root).
    #[arg(long)]
    pub n: Option<usize>,
    /// Mean dimension: 1, 3 or 6.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub evaluations: Option<usize>,
    /// Time only the approximate prior.
    #[arg(long)]
    pub skip_exact: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::validation(format!("thread pool: {e}")))?;
    }
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let mut r = Resolver::new(file);
    let (name, body) = match cli.command {
        Command::Prior(a) => ("prior", commands::prior(&mut r, a)?),
        Command::Fit(a) => ("fit", commands::fit(&mut r, a)?),
        Command::SelectNu(a) => ("select-nu", commands::select_nu(&mut r, a)?),
        Command::Reml(a) => ("reml", commands::reml(&mut r, a)?),
        Command::Simulate(a) => ("simulate", commands::simulate(&mut r, a)?),
        Command::Coverage(a) => ("coverage", commands::coverage(&mut r, a)?),
        Command::Semivariogram(a) => ("semivariogram", commands::semivariogram(&mut r, a)?),
        Command::Bench(a) => ("bench", commands::bench(&mut r, a)?),
    };
    Ok(commands::envelope(name, body, r.finish()?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", Failure::validation(e.to_string().trim_end()).to_json());
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    };
    match run(cli) {
        Ok(v) => {
            // A closed stdout (e.g. piped into `head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code as u8)
        }
    }
}
