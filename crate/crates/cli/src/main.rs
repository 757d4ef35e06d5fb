use std::path::PathBuf;
use std::process::ExitCode;

use asfw_core::bench::LassoVariant;
use clap::{Args, CommandFactory, Parser, Subcommand};

mod config;
mod run;

use config::Rho;

#[derive(Parser, Debug)]
#[command(name = "asfw", version, about = "Abs-smooth Frank-Wolfe experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the Frank-Wolfe method on a benchmark and write a CSV trace.
    Run(RunArgs),
    /// Count polyhedra visited by AASM on Rosenbrock-Nesterov II.
    AasmTable {
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Run the built-in property suites.
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
        /// Debug hook: perturb one L entry of every linearization.
        #[arg(long, hide = true)]
        corrupt_l: bool,
    },
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// `key=value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    /// Dimension, or a comma-separated list for a sweep.
    #[arg(long)]
    pub n: Option<String>,
    /// LASSO rows (default 2n).
    #[arg(long)]
    pub p: Option<usize>,
    /// LASSO weight: a number or `auto`.
    #[arg(long)]
    pub rho: Option<Rho>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// MAXQ feasible set, C1, C2 or C3; a comma-separated list sweeps.
    #[arg(long)]
    pub set: Option<String>,
    /// LASSO feasible set: box or ordered.
    #[arg(long)]
    pub variant: Option<LassoVariant>,
    /// sqrt, harmonic, fixed:T or short:GAMMA.
    #[arg(long)]
    pub step: Option<String>,
    #[arg(long)]
    pub monotone: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    #[arg(long)]
    pub partial_inner_limit: Option<usize>,
    /// CSV path; a directory for sweeps. Defaults to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Allow the extended problem set.
    #[arg(long)]
    pub extended: bool,
}

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run(args) => match config::resolve(&args) {
            Ok(sweep) => run::cmd_run(&sweep),
            Err(e) => config_error(&e),
        },
        Cmd::AasmTable { n_max } => {
            if !(1..=20).contains(&n_max) {
                config_error(&anyhow::anyhow!("--n-max must lie in 1..=20, got {n_max}"))
            } else {
                run::cmd_aasm_table(n_max)
            }
        }
        Cmd::Selftest { seed, corrupt_l } => run::cmd_selftest(seed, corrupt_l),
    };
    ExitCode::from(code)
}

fn config_error(e: &anyhow::Error) -> u8 {
    eprintln!("error: {e:#}\n");
    eprintln!("{}", Cli::command().render_usage());
    EXIT_CONFIG
}
