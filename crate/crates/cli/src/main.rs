use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use torsion_lab::mesh::LEVEL_CAP;
use torsion_lab::{Error, Result};

mod commands;
mod report;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "TORSION_LAB_THREADS";

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  config error (bad flags, level outside [0, 8], missing input file)
  3  domain error (invalid domain or family file)
  4  mesh error (degenerate or folded elements)
  5  solver error (CG failure, ill-conditioned Gram matrix, flow stagnation, fit)
  6  resource error (I/O failure, unwritable output)

Environment:
  TORSION_LAB_THREADS  worker threads (default: all cores)";

#[derive(Parser, Debug)]
#[command(name = "torsion-lab", version, about = "Quadratic FEM laboratory for the torsion problem Δu = 2, u = 0 on Γ", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve on one domain and write the nodal solution, boundary flux and a summary.
    Solve(SolveArgs),
    /// Run the identity suite across mesh levels with observed orders.
    Verify(VerifyArgs),
    /// Evaluate a one-parameter family and fit stability exponents.
    Stability(StabilityArgs),
    /// Run the privileged flow and write its trajectory.
    Flow(FlowArgs),
    /// Collect the outputs found in a directory into report.md.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct DomainSource {
    /// Domain file (JSON).
    #[arg(long, value_name = "FILE")]
    domain: Option<PathBuf>,
    /// Use a random smooth series domain generated from this seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct Output {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    source: DomainSource,
    #[arg(long, default_value_t = 5)]
    level: usize,
    #[command(flatten)]
    output: Output,
    /// Write vertices.csv and triangles.csv.
    #[arg(long)]
    dump_mesh: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    source: DomainSource,
    /// Inclusive level range `a..b`, a single level, or a comma list.
    #[arg(long, default_value = "2..5")]
    levels: String,
    /// Boundary samples for the geometry-only identities.
    #[arg(long, value_name = "M")]
    samples: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    /// Optional action word; `sweep` is the only one.
    #[arg(value_parser = ["sweep"], hide = true)]
    action: Option<String>,
    /// Family file (JSON).
    #[arg(long, value_name = "FILE")]
    family: PathBuf,
    /// Override the family's mesh level.
    #[arg(long)]
    level: Option<usize>,
    /// Boundary samples for the curvature measures.
    #[arg(long, value_name = "M")]
    samples: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct FlowArgs {
    /// Optional action word; `run` is the only one.
    #[arg(value_parser = ["run"], hide = true)]
    action: Option<String>,
    #[command(flatten)]
    source: DomainSource,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 500)]
    max_steps: usize,
    #[arg(long, default_value_t = 4)]
    level: usize,
    /// Keep R at its initial value (`--freeze-r false` recomputes it per step).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    freeze_r: bool,
    /// Move in the direction that increases J instead of decreasing it.
    #[arg(long)]
    ascent: bool,
    /// Stop once the circle distance falls below this.
    #[arg(long, default_value_t = 1e-3)]
    target: f64,
    /// Boundary samples for the circle distance.
    #[arg(long, value_name = "M", default_value_t = 512)]
    samples: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding earlier outputs; report.md is written there.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

pub(crate) fn check_level(level: usize) -> Result<()> {
    if level > LEVEL_CAP {
        return Err(Error::Config(format!("level {level} is outside [0, {LEVEL_CAP}]")));
    }
    Ok(())
}

/// Input files must exist before anything is computed.
pub(crate) fn check_input(path: &std::path::Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!("input file {} does not exist", path.display())));
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Verify(a) => commands::verify(a),
        Command::Stability(a) => commands::stability(a),
        Command::Flow(a) => commands::flow(a),
        Command::Report(a) => report::run(&a.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
