//! Command-line front end. Exit status: 0 when every run converged and
//! passed verification, 2 when a converged run failed a check, 1 when a
//! solver failed or the arguments were invalid.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cruise_pmp::run::{run, Command, RunConfig};
use cruise_pmp::solver::VerifyTolerances;

#[derive(Parser)]
#[command(name = "cruise-pmp", version, about = "Minimum time-fuel cruise trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Switching-point solve with the singular feedback.
    SolveIndirect {
        #[command(flatten)]
        common: Common,
        /// RK4 steps per arc.
        #[arg(long)]
        steps: Option<usize>,
        /// Number of multi-start points.
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Single-shooting Euler baseline.
    SolveDirect {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 400)]
        nodes: usize,
        /// Start from the indirect solution instead of a straight-line guess.
        #[arg(long)]
        warm_start: bool,
    },
    /// Both methods on one scenario, with the relative cost gap.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 400)]
        nodes: usize,
    },
    /// Indirect solves over a list of cost weights.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5")]
        alphas: Vec<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Re-integrates a stored solution and re-runs the checks.
    Verify {
        /// Directory containing solution.json.
        #[arg(long)]
        solution: PathBuf,
        #[command(flatten)]
        tol: Tolerances,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's cost weight.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct Tolerances {
    #[arg(long)]
    tol_h: Option<f64>,
    #[arg(long)]
    tol_s: Option<f64>,
    #[arg(long)]
    tol_lc: Option<f64>,
    #[arg(long)]
    tol_lambda_m: Option<f64>,
    #[arg(long)]
    tol_chi: Option<f64>,
}

impl Tolerances {
    fn resolve(&self) -> VerifyTolerances {
        let d = VerifyTolerances::default();
        VerifyTolerances {
            hamiltonian: self.tol_h.unwrap_or(d.hamiltonian),
            switching: self.tol_s.unwrap_or(d.switching),
            legendre_clebsch: self.tol_lc.unwrap_or(d.legendre_clebsch),
            transversality: self.tol_lambda_m.unwrap_or(d.transversality),
            heading: self.tol_chi.unwrap_or(d.heading),
        }
    }
}

fn with_common(command: Command, c: Common) -> RunConfig {
    RunConfig {
        scenario: Some(c.scenario),
        alpha: c.alpha,
        out: Some(c.out),
        seed: c.seed,
        tolerances: c.tol.resolve(),
        ..RunConfig::new(command)
    }
}

fn config(cli: Cli) -> RunConfig {
    match cli.command {
        Cmd::SolveIndirect { common, steps, starts } => RunConfig {
            steps_per_arc: steps,
            starts,
            ..with_common(Command::SolveIndirect, common)
        },
        Cmd::SolveDirect {
            common,
            nodes,
            warm_start,
        } => RunConfig {
            nodes,
            warm_start,
            ..with_common(Command::SolveDirect, common)
        },
        Cmd::Compare { common, steps, nodes } => RunConfig {
            steps_per_arc: steps,
            nodes,
            ..with_common(Command::Compare, common)
        },
        Cmd::SweepAlpha { common, alphas, steps } => RunConfig {
            alphas,
            steps_per_arc: steps,
            ..with_common(Command::SweepAlpha, common)
        },
        Cmd::Verify { solution, tol } => RunConfig {
            solution: Some(solution),
            tolerances: tol.resolve(),
            ..RunConfig::new(Command::Verify)
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cfg = config(Cli::parse());
    match run(&cfg) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            log::info!("status: {:?}", report.status);
            ExitCode::from(report.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
