//! Command orchestration: single solves, comparison, α-sweep and
//! re-verification. Each run writes into its own directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::direct::{euler_rollout, solve_direct, DirectGrid, DirectOptions};
use crate::error::{Error, Result};
use crate::io::{create_dir, emit_trajectory_csv, read_solution, write_json, SolutionRecord};
use crate::scenario::Problem;
use crate::solver::{build_solution, solve_indirect, IndirectOptions, Method, NlpMetadata, Solution, VerifyTolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveIndirect,
    SolveDirect,
    Compare,
    SweepAlpha,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub scenario: Option<PathBuf>,
    /// Directory holding `solution.json`, for `verify`.
    pub solution: Option<PathBuf>,
    /// Overrides the scenario's α.
    pub alpha: Option<f64>,
    pub alphas: Vec<f64>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub steps_per_arc: Option<usize>,
    pub starts: Option<usize>,
    pub nodes: usize,
    /// Start the direct method from an indirect solution.
    pub warm_start: bool,
    pub tolerances: VerifyTolerances,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            scenario: None,
            solution: None,
            alpha: None,
            alphas: vec![0.1, 0.3, 0.5],
            out: None,
            seed: 0,
            steps_per_arc: None,
            starts: None,
            nodes: 400,
            warm_start: false,
            tolerances: VerifyTolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |a: f64| (0.0..=1.0).contains(&a);
        if let Some(a) = self.alpha.filter(|a| !in_unit(*a)) {
            return Err(Error::validation("alpha", format!("{a} is outside [0, 1]")));
        }
        if self.command == Command::SweepAlpha {
            if self.alphas.is_empty() {
                return Err(Error::validation("alphas", "empty list"));
            }
            if let Some(a) = self.alphas.iter().find(|a| !in_unit(**a)) {
                return Err(Error::validation("alphas", format!("{a} is outside [0, 1]")));
            }
        }
        if self.nodes < 2 {
            return Err(Error::validation("nodes", "need at least 2 nodes"));
        }
        if self.steps_per_arc == Some(0) {
            return Err(Error::validation("steps", "need at least 1 step per arc"));
        }
        match self.command {
            Command::Verify if self.solution.is_none() => Err(Error::validation("solution", "required for verify")),
            Command::Verify => Ok(()),
            _ if self.scenario.is_none() => Err(Error::validation("scenario", "required")),
            _ if self.out.is_none() => Err(Error::validation("out", "required")),
            _ => Ok(()),
        }
    }

    pub fn indirect_options(&self) -> IndirectOptions {
        let mut o = IndirectOptions {
            seed: self.seed,
            tolerances: self.tolerances,
            ..IndirectOptions::default()
        };
        if let Some(n) = self.steps_per_arc {
            o.integrator.steps_per_arc = n;
        }
        if let Some(n) = self.starts {
            o.starts = n;
        }
        o
    }

    pub fn direct_options(&self) -> DirectOptions {
        DirectOptions {
            nodes: self.nodes,
            ..DirectOptions::default()
        }
    }

    fn problem(&self) -> Result<Problem> {
        let path = self
            .scenario
            .as_ref()
            .ok_or_else(|| Error::validation("scenario", "required"))?;
        let problem = Problem::load(path)?;
        match self.alpha {
            Some(a) => problem.with_alpha(a),
            None => Ok(problem),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        let out = self
            .out
            .as_deref()
            .ok_or_else(|| Error::validation("out", "required"))?;
        create_dir(out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Converged and every verification check passed.
    Verified,
    /// Converged with at least one failed check.
    VerificationFailed,
    /// At least one solve did not converge; partial results were written.
    SolverFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Verified => 0,
            Status::VerificationFailed => 2,
            Status::SolverFailed => 1,
        }
    }

    fn worst(self, other: Status) -> Status {
        let rank = |s: Status| match s {
            Status::Verified => 0,
            Status::VerificationFailed => 1,
            Status::SolverFailed => 2,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub status: Status,
    /// Human-readable summary, one item per line.
    pub lines: Vec<String>,
}

/// Indirect solutions need a passing report; direct ones carry none.
pub fn solution_status(sol: &Solution) -> Status {
    match (&sol.verification, sol.method) {
        (Some(v), _) if v.all_passed() => Status::Verified,
        (None, Method::Direct) => Status::Verified,
        _ => Status::VerificationFailed,
    }
}

fn describe(sol: &Solution, lines: &mut Vec<String>) {
    lines.push(format!("method: {:?}", sol.method));
    lines.push(format!("alpha: {}", sol.scenario.alpha));
    lines.push(format!("cost J: {:.6}", sol.cost));
    if let Some(s) = sol.schedule {
        lines.push(format!(
            "schedule: t1 = {:.6} s, t2 = {:.6} s, tf = {:.6} s, chi0 = {:.9} rad",
            s.t1, s.t2, s.tf, s.chi0
        ));
    } else {
        lines.push(format!("tf: {:.6} s", sol.trajectory.final_sample().t));
    }
    let r = sol.terminal_residuals;
    lines.push(format!(
        "terminal residuals: {:.3e} m, {:.3e} m, {:.3e} m/s",
        r[0], r[1], r[2]
    ));
    if let Some(v) = &sol.verification {
        for (name, c) in v.checks() {
            lines.push(format!(
                "check {name}: {} ({})",
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            ));
        }
    }
}

fn write_solution(dir: &Path, sol: &Solution, record: &SolutionRecord) -> Result<()> {
    create_dir(dir)?;
    write_json(record, dir.join("solution.json"))?;
    emit_trajectory_csv(sol, dir.join("trajectory.csv"))
}

fn run_indirect(config: &RunConfig) -> Result<RunReport> {
    let problem = config.problem()?;
    let out = config.out_dir()?;
    let opts = config.indirect_options();
    let sol = solve_indirect(&problem, &opts)?;
    let record = SolutionRecord::new(&sol, &problem, None, &opts.integrator, &opts.tolerances);
    write_solution(out, &sol, &record)?;
    let mut lines = Vec::new();
    describe(&sol, &mut lines);
    Ok(RunReport {
        status: solution_status(&sol),
        lines,
    })
}

fn run_direct(config: &RunConfig) -> Result<RunReport> {
    let problem = config.problem()?;
    let out = config.out_dir()?;
    let iopts = config.indirect_options();
    let warm = if config.warm_start {
        let ind = solve_indirect(&problem, &iopts)?;
        Some(DirectGrid::from_trajectory(&ind.trajectory, config.nodes))
    } else {
        None
    };
    let (sol, grid) = solve_direct(&problem, &config.direct_options(), warm.as_ref())?;
    let record = SolutionRecord::new(&sol, &problem, Some(&grid), &iopts.integrator, &iopts.tolerances);
    write_solution(out, &sol, &record)?;
    let mut lines = Vec::new();
    describe(&sol, &mut lines);
    Ok(RunReport {
        status: solution_status(&sol),
        lines,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub cost: Option<f64>,
    pub tf: Option<f64>,
    pub final_mass: Option<f64>,
    pub converged: bool,
    pub verified: Option<bool>,
    pub error: Option<String>,
}

impl MethodSummary {
    fn from_result(r: std::result::Result<&Solution, &Error>) -> Self {
        match r {
            Ok(sol) => {
                let last = sol.trajectory.final_sample();
                Self {
                    cost: Some(sol.cost),
                    tf: Some(last.t),
                    final_mass: Some(last.state[3]),
                    converged: sol.nlp.converged,
                    verified: sol.verification.as_ref().map(|v| v.all_passed()),
                    error: None,
                }
            }
            Err(e) => Self {
                cost: None,
                tf: None,
                final_mass: None,
                converged: false,
                verified: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Indirect versus direct on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub nodes: usize,
    pub indirect: MethodSummary,
    pub direct: MethodSummary,
    /// |J_indirect − J_direct| / |J_direct|.
    pub relative_gap: Option<f64>,
}

/// Runs both methods, writes `comparison.json`, `controls.csv` and one
/// solution directory per method. The direct method is cold-started so
/// that it stays independent of the indirect result.
pub fn run_compare(config: &RunConfig) -> Result<(ComparisonReport, Status)> {
    let problem = config.problem()?;
    let out = config.out_dir()?;
    let iopts = config.indirect_options();
    let dopts = config.direct_options();
    let (ind, dir) = rayon::join(
        || solve_indirect(&problem, &iopts),
        || solve_direct(&problem, &dopts, None),
    );
    let report = ComparisonReport {
        alpha: problem.scenario.alpha,
        nodes: dopts.nodes,
        indirect: MethodSummary::from_result(ind.as_ref()),
        direct: MethodSummary::from_result(dir.as_ref().map(|(s, _)| s)),
        relative_gap: match (&ind, &dir) {
            (Ok(a), Ok((b, _))) => Some((a.cost - b.cost).abs() / b.cost.abs()),
            _ => None,
        },
    };
    write_json(&report, out.join("comparison.json"))?;
    let mut status = Status::Verified;
    if let Ok(sol) = &ind {
        let rec = SolutionRecord::new(sol, &problem, None, &iopts.integrator, &iopts.tolerances);
        write_solution(&out.join("indirect"), sol, &rec)?;
        status = status.worst(solution_status(sol));
    } else {
        status = Status::SolverFailed;
    }
    if let Ok((sol, grid)) = &dir {
        let rec = SolutionRecord::new(sol, &problem, Some(grid), &iopts.integrator, &iopts.tolerances);
        write_solution(&out.join("direct"), sol, &rec)?;
        let indirect_grid = ind
            .as_ref()
            .ok()
            .map(|s| DirectGrid::from_trajectory(&s.trajectory, grid.nodes()));
        write_controls_csv(&out.join("controls.csv"), grid, indirect_grid.as_ref())?;
    } else {
        status = Status::SolverFailed;
    }
    Ok((report, status))
}

/// Direct node controls overlaid with the indirect controls sampled at the
/// same node times (on the indirect time axis).
fn write_controls_csv(path: &Path, direct: &DirectGrid, indirect: Option<&DirectGrid>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record([
        "k",
        "t_direct",
        "chi_direct",
        "pi_direct",
        "t_indirect",
        "chi_indirect",
        "pi_indirect",
    ])
    .map_err(|e| csv_io(path, e))?;
    let n = direct.nodes();
    for k in 0..n {
        let frac = k as f64 / n as f64;
        let ind = indirect.map(|g| (frac * g.tf, g.chi[k], g.pi[k]));
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        w.write_record([
            k.to_string(),
            f(Some(frac * direct.tf)),
            f(Some(direct.chi[k])),
            f(Some(direct.pi[k])),
            f(ind.map(|i| i.0)),
            f(ind.map(|i| i.1)),
            f(ind.map(|i| i.2)),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// One row of the α-sweep trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub tf: Option<f64>,
    pub cost: Option<f64>,
    pub final_mass: Option<f64>,
    pub verified: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// t1 nondecreasing in α over the converged rows.
    pub t1_nondecreasing: bool,
}

/// Solves every α in parallel; each α writes into `alpha_<value>/`.
pub fn run_sweep(config: &RunConfig) -> Result<(SweepReport, Status)> {
    let problem = config.problem()?;
    let out = config.out_dir()?;
    let opts = config.indirect_options();
    let results: Vec<(f64, Result<Solution>)> = config
        .alphas
        .par_iter()
        .map(|&a| (a, problem.with_alpha(a).and_then(|p| solve_indirect(&p, &opts))))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut status = Status::Verified;
    for (alpha, r) in &results {
        match r {
            Ok(sol) => {
                let p = problem.with_alpha(*alpha)?;
                let rec = SolutionRecord::new(sol, &p, None, &opts.integrator, &opts.tolerances);
                write_solution(&out.join(format!("alpha_{alpha}")), sol, &rec)?;
                let st = solution_status(sol);
                status = status.worst(st);
                let s = sol.schedule.expect("indirect solutions carry a schedule");
                rows.push(SweepRow {
                    alpha: *alpha,
                    t1: Some(s.t1),
                    t2: Some(s.t2),
                    tf: Some(s.tf),
                    cost: Some(sol.cost),
                    final_mass: Some(sol.trajectory.final_sample().state[3]),
                    verified: st == Status::Verified,
                    error: None,
                });
            }
            Err(e) => {
                status = Status::SolverFailed;
                rows.push(SweepRow {
                    alpha: *alpha,
                    t1: None,
                    t2: None,
                    tf: None,
                    cost: None,
                    final_mass: None,
                    verified: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let mut ordered: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.t1.map(|t| (r.alpha, t))).collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let report = SweepReport {
        t1_nondecreasing: ordered.windows(2).all(|w| w[1].1 >= w[0].1),
        rows,
    };
    write_trend_csv(&out.join("trend.csv"), &report)?;
    write_json(&report, out.join("sweep.json"))?;
    Ok((report, status))
}

fn write_trend_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["alpha", "t1", "t2", "tf", "cost", "final_mass", "verified"])
        .map_err(|e| csv_io(path, e))?;
    let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            format!("{:e}", r.alpha),
            f(r.t1),
            f(r.t2),
            f(r.tf),
            f(r.cost),
            f(r.final_mass),
            u8::from(r.verified).to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Re-integrates a stored solution and re-runs the checks. A direct record
/// is re-rolled and must reproduce its stored cost.
pub fn run_verify(config: &RunConfig) -> Result<RunReport> {
    let dir = config
        .solution
        .as_ref()
        .ok_or_else(|| Error::validation("solution", "required"))?;
    let record = read_solution(dir.join("solution.json"))?;
    let problem = record.problem()?;
    let mut lines = vec![format!("solution: {}", dir.display())];
    let status = match record.method {
        Method::Indirect => {
            let schedule = record
                .schedule
                .ok_or_else(|| Error::validation("schedule", "indirect record without a schedule"))?;
            let opts = IndirectOptions {
                integrator: record.integrator,
                tolerances: config.tolerances,
                ..IndirectOptions::default()
            };
            let sol = build_solution(&problem, &schedule, &opts, NlpMetadata::default())?;
            describe(&sol, &mut lines);
            let reproduced = sol.cost == record.cost;
            lines.push(format!("cost reproduced: {reproduced}"));
            if reproduced {
                solution_status(&sol)
            } else {
                Status::VerificationFailed
            }
        }
        Method::Direct => {
            let grid = record
                .direct_grid
                .as_ref()
                .ok_or_else(|| Error::validation("direct_grid", "direct record without node controls"))?;
            let xs = euler_rollout(&problem, grid)?;
            let last = xs.last().expect("rollout has states");
            let alpha = problem.scenario.alpha;
            let cost = alpha * grid.tf + (alpha - 1.0) * last[3];
            let reproduced = cost == record.cost;
            lines.push(format!("method: Direct, cost J: {cost:.6}, reproduced: {reproduced}"));
            if reproduced {
                Status::Verified
            } else {
                Status::VerificationFailed
            }
        }
    };
    Ok(RunReport { status, lines })
}

/// Dispatches a validated configuration.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    match config.command {
        Command::SolveIndirect => run_indirect(config),
        Command::SolveDirect => run_direct(config),
        Command::Verify => run_verify(config),
        Command::Compare => {
            let (r, status) = run_compare(config)?;
            let f = |m: &MethodSummary| match (&m.cost, &m.error) {
                (Some(c), _) => format!("{c:.6}"),
                (None, Some(e)) => format!("failed: {e}"),
                _ => "n/a".into(),
            };
            let mut lines = vec![
                format!("alpha: {}", r.alpha),
                format!("indirect J: {}", f(&r.indirect)),
                format!("direct J ({} nodes): {}", r.nodes, f(&r.direct)),
            ];
            if let Some(g) = r.relative_gap {
                lines.push(format!("relative gap: {g:.3e}"));
            }
            Ok(RunReport { status, lines })
        }
        Command::SweepAlpha => {
            let (r, status) = run_sweep(config)?;
            let mut lines: Vec<String> = r
                .rows
                .iter()
                .map(|row| match (row.t1, row.cost) {
                    (Some(t1), Some(c)) => format!(
                        "alpha {}: t1 = {t1:.3} s, J = {c:.6}, verified = {}",
                        row.alpha, row.verified
                    ),
                    _ => format!("alpha {}: failed: {}", row.alpha, row.error.as_deref().unwrap_or("")),
                })
                .collect();
            lines.push(format!("t1 nondecreasing in alpha: {}", r.t1_nondecreasing));
            Ok(RunReport { status, lines })
        }
    }
}
