//! `charflow`: solver, inpainting and verification front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "charflow", version, about = "Transport equations with an interior stop set, solved along characteristics")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "CHARFLOW_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a built-in linear problem on a grid.
    Solve(SolveArgs),
    /// Fill the masked pixels of a PGM/PPM image.
    Inpaint(InpaintArgs),
    /// Run the bound and identity checks on the built-in cases.
    Verify(VerifyArgs),
    /// Step-order and grid-convergence study.
    Converge(ConvergeArgs),
    /// Continuous dependence on the transport field.
    Stability(StabilityArgs),
    /// Distinct fixed points of the quasi-linear clamp example.
    Nonunique(NonuniqueArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// radial, spiral, disk-segment or rect-skeleton.
    #[arg(long, default_value = "radial")]
    case: String,
    /// Boundary data: cos, step, or const=<value>.
    #[arg(long, default_value = "cos")]
    data: String,
    /// Right-hand side: zero, affine, or const=<value>.
    #[arg(long, default_value = "zero")]
    rhs: String,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(8..=4096))]
    grid: u32,
    #[arg(long, default_value_t = 1e-3, value_parser = commands::parse_step)]
    step: f64,
    /// Step limit per characteristic.
    #[arg(long = "max-steps", value_parser = clap::value_parser!(usize))]
    max_steps: Option<usize>,
    /// Exponent of the time transform (m₀ is re-estimated).
    #[arg(long, value_parser = commands::parse_q)]
    q: Option<f64>,
    /// Declared causality constant; rejected if the field violates it.
    #[arg(long, value_parser = commands::parse_unit)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InpaintArgs {
    #[arg(long)]
    image: PathBuf,
    /// Graymap of the same size; nonzero pixels are filled.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, value_parser = commands::parse_weight)]
    blend: f64,
    /// Mollification length in pixels.
    #[arg(long, default_value_t = 2.0, value_parser = commands::parse_positive)]
    smoothing: f64,
    #[arg(long, default_value_t = 0.5, value_parser = commands::parse_unit)]
    beta: f64,
    #[arg(long, default_value_t = 1e-6, value_parser = commands::parse_positive)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    max_iter: u32,
    #[arg(long, default_value_t = 1.0, value_parser = commands::parse_unit)]
    damping: f64,
    #[arg(long, default_value_t = 1e-3, value_parser = commands::parse_step)]
    step: f64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Cases to check; all built-ins by default.
    #[arg(long = "case")]
    cases: Vec<String>,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(8..=4096))]
    grid: u32,
    #[arg(long, default_value_t = 1e-3, value_parser = commands::parse_step)]
    step: f64,
    #[arg(long = "max-steps", value_parser = clap::value_parser!(usize))]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    traces: u32,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Override the declared β of every case.
    #[arg(long, value_parser = commands::parse_unit)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3], allow_hyphen_values = true)]
    steps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![64, 128, 256])]
    grids: Vec<usize>,
    #[arg(long = "tv-case", default_value = "radial")]
    tv_case: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(8..=4096))]
    grid: u32,
    #[arg(long, default_value_t = 1e-3, value_parser = commands::parse_step)]
    step: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_6, value_parser = commands::parse_positive)]
    theta0: f64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(2..=20))]
    levels: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NonuniqueArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![-2.0, 0.0, 0.5, 2.0], allow_hyphen_values = true)]
    seeds: Vec<f64>,
    #[arg(long, default_value_t = 1e-6, value_parser = commands::parse_positive)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    max_iter: u32,
    #[arg(long, default_value_t = 1.0, value_parser = commands::parse_unit)]
    damping: f64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(8..=4096))]
    grid: u32,
    #[arg(long, default_value_t = 1e-3, value_parser = commands::parse_step)]
    step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Inpaint(a) => commands::inpaint(a),
        Command::Verify(a) => commands::verify(a),
        Command::Converge(a) => commands::converge(a),
        Command::Stability(a) => commands::stability(a),
        Command::Nonunique(a) => commands::nonunique(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
