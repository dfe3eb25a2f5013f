//! `grflab`: batch front end for finite Karhunen–Loève Gaussian random fields.
//!
//! Exit status: 0 on success, 2 when a report's validation verdict fails
//! (PSD or symmetry check, or a jet scan under `--require-pass`), 1 on usage,
//! input or schema errors.

mod commands;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use grflab_core::mc::DEFAULT_SAMPLES;
use input::{parse_axis, parse_multi_index, parse_point};
use output::Format;

#[derive(Parser)]
#[command(name = "grflab", version, about = "Finite Karhunen–Loève Gaussian random fields: sampling, kernels, jets and Monte Carlo event probabilities")]
struct Cli {
    /// Worker threads for parallel scans and Monte Carlo (default: all cores)
    #[arg(long, global = true, env = "GRFLAB_THREADS")]
    threads: Option<usize>,

    /// Report format
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the report here (atomically) instead of standard output
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct GridArgs {
    /// Box side `LO:HI`; once per axis, or once for all axes (default 0:1)
    #[arg(long = "domain", value_name = "LO:HI", value_parser = parse_axis)]
    pub domain: Vec<(f64, f64)>,

    /// Grid intervals per axis (default 256 on the line, 64 in the plane, 16 above)
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Args)]
pub struct McArgs {
    /// Number of independent sample paths
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,

    /// Seed; sample i uses the random stream (seed, i)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct KernelSource {
    /// Covariance kernel JSON (`from_kl` or `closed_form`)
    #[arg(long)]
    pub kernel: Option<PathBuf>,

    /// Field JSON; its covariance kernel is used
    #[arg(long)]
    pub field: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw sample paths X = Σ σ_n ξ_n f_n of a finite Karhunen–Loève field and tabulate them on a grid
    Sample {
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Number of paths
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate mixed partials ∂_(α,β)K of a covariance kernel on a point set and check symmetry and positive semidefiniteness
    Covariance {
        #[command(flatten)]
        source: KernelSource,
        /// Evaluation point `x0,x1,…`; repeat for each point (at most 64)
        #[arg(long = "point", required = true, value_parser = parse_point)]
        points: Vec<Vec<f64>>,
        /// Derivative in the first argument (default: none)
        #[arg(long, value_parser = parse_multi_index)]
        alpha: Option<grflab_core::MultiIndex>,
        /// Derivative in the second argument (default: none)
        #[arg(long, value_parser = parse_multi_index)]
        beta: Option<grflab_core::MultiIndex>,
        /// PSD tolerance relative to the largest diagonal entry
        #[arg(long, default_value_t = grflab_core::kernel::PSD_REL_TOL)]
        rel_tol: f64,
    },
    /// Compute the C^{r,r} kernel seminorm ‖K‖_(r,r) on a box, or the distance ‖K − K'‖_(r,r)
    Seminorm {
        #[command(flatten)]
        source: KernelSource,
        /// Second kernel; the report gives the distance to it
        #[arg(long, conflicts_with = "minus_field")]
        minus_kernel: Option<PathBuf>,
        /// Second kernel given by a field
        #[arg(long)]
        minus_field: Option<PathBuf>,
        /// Derivative order r
        #[arg(long, default_value_t = 0)]
        order: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Scan the jet covariance of j^r X for maximal rank on a grid, the sufficient condition for almost-sure transversality
    JetScan {
        #[command(flatten)]
        source: KernelSource,
        /// Jet order r
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[command(flatten)]
        grid: GridArgs,
        /// Spectral-ratio cutoff λ_min/λ_max
        #[arg(long, default_value_t = grflab_core::jet::DEFAULT_REL_TOL)]
        rel_tol: f64,
        /// Exit with status 2 unless every grid point passes
        #[arg(long)]
        require_pass: bool,
    },
    /// Estimate the probability of an event of the sample path (sup-norm ball, zero count, positivity, degenerate zero) by Monte Carlo
    Estimate {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        event: PathBuf,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Ratio E‖X‖_{Q,r−1} / √‖K‖_(r,r) from the Gaussian sup-norm inequality
    GaussRatio {
        #[arg(long)]
        field: PathBuf,
        /// Kernel order r (at least 1)
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Track event probabilities along a sequence of fields whose kernels converge to a limit kernel
    LimitStudy {
        #[arg(long)]
        study: PathBuf,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Bump-sum fields X_n with ‖K_{X_n}‖ → 0 but P{‖X_n‖ < 1} = (1 − 1/n)^{n²} → 0
    Counterexample {
        /// Sequence index n ≥ 2; repeat or comma-separate for several rows
        #[arg(long = "n", value_delimiter = ',', default_value = "5")]
        n: Vec<usize>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Check an input file against its schema; fields and kernels are also checked for symmetry and positive semidefiniteness on a grid
    Validate {
        #[command(flatten)]
        target: ValidateTarget,
        /// Points per axis for the symmetry and PSD checks
        #[arg(long, default_value_t = 8)]
        points: usize,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct ValidateTarget {
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    #[arg(long)]
    pub event: Option<PathBuf>,
    #[arg(long)]
    pub study: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<output::Report> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Sample { field, grid, count, seed } => commands::sample(&field, &grid, count, seed),
        Command::Covariance {
            source,
            points,
            alpha,
            beta,
            rel_tol,
        } => commands::covariance(&source, &points, alpha, beta, rel_tol),
        Command::Seminorm {
            source,
            minus_kernel,
            minus_field,
            order,
            grid,
        } => commands::seminorm(&source, minus_kernel.as_deref(), minus_field.as_deref(), order, &grid),
        Command::JetScan {
            source,
            order,
            grid,
            rel_tol,
            require_pass,
        } => commands::jet_scan(&source, order, &grid, rel_tol, require_pass),
        Command::Estimate { field, event, mc } => commands::estimate(&field, &event, &mc),
        Command::GaussRatio { field, order, grid, mc } => commands::gauss_ratio(&field, order, &grid, &mc),
        Command::LimitStudy { study, mc } => commands::limit_study(&study, &mc),
        Command::Counterexample { n, mc } => commands::counterexample(&n, &mc),
        Command::Validate { target, points } => commands::validate(&target, points),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (format, path) = (cli.format, cli.output.clone());
    match run(cli).and_then(|r| output::emit(r.render(format), path.as_deref()).map(|_| r.passed)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("grflab: validation failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("grflab: {e:#}");
            ExitCode::from(1)
        }
    }
}
