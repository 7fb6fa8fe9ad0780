//! `proactive`: command-line front end for the proactive download library.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "proactive", version, about = "Proactive download, demand shaping and recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expected per-slot cost of a scenario without proactive downloads.
    Simulate(SimulateArgs),
    /// Optimal proactive downloads for a scenario.
    Optimize(OptimizeArgs),
    /// Joint demand shaping and proactive downloads.
    Shape(ShapeArgs),
    /// Ratings that realize target profiles.
    Recommend(RecommendArgs),
    /// Cost reduction versus population size.
    Scale(ScaleArgs),
    /// Rerun one of the built-in reference experiments.
    ReproducePaper(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Enumerate,
    #[value(name = "analytic_quadratic", alias = "analytic")]
    AnalyticQuadratic,
    #[value(name = "monte_carlo", alias = "mc")]
    MonteCarlo,
}

#[derive(Debug, Args)]
pub struct EngineFlags {
    /// Evaluation engine; defaults to the scenario's.
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Monte Carlo sample count (implies monte_carlo when no engine is given).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: Option<u64>,
    /// Seed for generators and Monte Carlo streams; defaults to the scenario's.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Relative projected-gradient tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long = "max-iters", default_value_t = 20_000)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct OutputFlags {
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the JSON report here (it always goes to stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub engine: EngineFlags,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub engine: EngineFlags,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Also compute active sets, Policy A and the reduction bounds.
    #[arg(long)]
    pub bounds: bool,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub engine: EngineFlags,
    /// Entropy-ball scale applied to every user; defaults to the scenario's.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Relative tolerance on the outer objective change.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long = "max-iters", default_value_t = 200)]
    pub max_iters: usize,
    /// Per-iteration trace CSV (iter, f0, residual).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// JSON list of `{"target": [...], "silence": q}` rows.
    #[arg(long)]
    pub profile: PathBuf,
    /// JSON list of original rating vectors, one per profile row.
    #[arg(long)]
    pub ratings: PathBuf,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    /// Instance family; `zipf` is the 50-item, 8-slot Zipf family.
    #[arg(long, default_value = "zipf")]
    pub family: String,
    /// Comma-separated population sizes (at least three).
    #[arg(long = "N", value_delimiter = ',', default_values_t = [25usize, 50, 100, 200])]
    pub users: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    TwoUserQuadratic,
    TwoUserOutage,
    Scaling,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Directory for the CSV files and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", commands::error_json("argument", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<proactive_core::Error>())
                .map_or("internal", |c| c.kind());
            eprintln!("{}", commands::error_json(kind, &format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
