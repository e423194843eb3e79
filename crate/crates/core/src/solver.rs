//! Switching-point NLP: choose (χ0, t1, t2, tf) so that the feedback
//! trajectory meets the terminal conditions at least cost.
//!
//! Decision variables are nonnegative arc durations in units of the time
//! scale, z = (χ0, d1, d2, d3) with t1 = d1, t2 = d1 + d2, tf = d1 + d2 + d3.
//! Under a constant wind χ0 follows from tf in closed form and is dropped.
//!
//! The search runs in two phases. A multi-start augmented-Lagrangian loop
//! around Nelder–Mead, on a coarse integration grid, locates the basin.
//! The best start is then polished on the full grid: for a given singular
//! duration d2 the remaining variables are solved from the terminal
//! conditions by Newton, and Brent minimises the cost over d2.

use std::cell::RefCell;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{ArcIntegrator, ArcSchedule, IntegratorOptions, Phase, Trajectory};
use crate::optim::{
    augmented_lagrangian, brent, nelder_mead, newton, AugLagOptions, ConstrainedProblem, NelderMeadOptions,
    FAILED_EVALUATION,
};
use crate::pmp::Costate;
use crate::scenario::{Problem, Scenario};
use crate::wind::WindField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyTolerances {
    pub hamiltonian: f64,
    pub switching: f64,
    pub legendre_clebsch: f64,
    pub transversality: f64,
    pub heading: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            hamiltonian: 1e-5,
            switching: 1e-6,
            legendre_clebsch: 1e-10,
            transversality: 1e-4,
            heading: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndirectOptions {
    pub integrator: IntegratorOptions,
    /// RK4 steps per arc during the multi-start phase.
    pub global_steps_per_arc: usize,
    pub starts: usize,
    pub seed: u64,
    pub feas_tol: f64,
    pub aug_lag: AugLagOptions,
    pub nelder_mead: NelderMeadOptions,
    pub polish: bool,
    pub newton_tol: f64,
    pub tolerances: VerifyTolerances,
}

impl Default for IndirectOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            global_steps_per_arc: 50,
            starts: 8,
            seed: 0,
            feas_tol: 1e-6,
            aug_lag: AugLagOptions::default(),
            nelder_mead: NelderMeadOptions::default(),
            polish: true,
            newton_tol: 1e-12,
            tolerances: VerifyTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Indirect,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NlpMetadata {
    pub iterations: u64,
    pub outer_iterations: usize,
    pub restarts: usize,
    pub starts: usize,
    pub feasible_starts: usize,
    pub best_start: Option<usize>,
    pub converged: bool,
    /// Infinity norm of the scaled terminal residuals.
    pub max_scaled_residual: f64,
    pub polished: bool,
    pub start_errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub passed: bool,
    /// Worst measured value of the checked quantity; `None` when it is not
    /// finite (no co-states, or no singular samples).
    pub measured: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    fn new(passed: bool, measured: f64, detail: impl Into<String>) -> Self {
        Self {
            passed,
            measured: measured.is_finite().then_some(measured),
            detail: detail.into(),
        }
    }
}

/// Optimality checks on a trajectory with co-states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// max |H + α|.
    pub hamiltonian: CheckResult,
    /// Sign of S on the bang arcs and |S| on the singular arc.
    pub switching: CheckResult,
    /// min −<λ, D> on the singular arc.
    pub legendre_clebsch: CheckResult,
    /// |λ_m(tf) − (α − 1)| in SI units.
    pub transversality: CheckResult,
    /// max |sinχ λ_x − cosχ λ_y| / ‖(λ_x, λ_y)‖.
    pub heading: CheckResult,
    /// Mach and CAS envelope monitor.
    pub envelope: CheckResult,
}

impl VerificationReport {
    pub fn checks(&self) -> [(&'static str, &CheckResult); 6] {
        [
            ("hamiltonian", &self.hamiltonian),
            ("switching", &self.switching),
            ("legendre_clebsch", &self.legendre_clebsch),
            ("transversality", &self.transversality),
            ("heading", &self.heading),
            ("envelope", &self.envelope),
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub method: Method,
    pub scenario: Scenario,
    pub schedule: Option<ArcSchedule>,
    pub trajectory: Trajectory,
    /// α tf + (α − 1) m(tf), seconds and kilograms.
    pub cost: f64,
    /// (x, y, v) at tf minus target, in m, m, m/s.
    pub terminal_residuals: [f64; 3],
    pub verification: Option<VerificationReport>,
    pub nlp: NlpMetadata,
}

/// Initial heading for a constant wind: the still-air track must point at
/// the target displaced by −W tf.
pub fn chi0_constant_wind(scenario: &Scenario, wx: f64, wy: f64, tf: f64) -> Result<f64> {
    let dx = scenario.xf_m - wx * tf - scenario.x0_m;
    let dy = scenario.yf_m - wy * tf - scenario.y0_m;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "target coincides with the wind-drifted origin at tf = {tf} s"
        )));
    }
    Ok(dy.atan2(dx))
}

/// The NLP seen by the optimisers.
struct SwitchingNlp<'a> {
    problem: &'a Problem,
    integ: ArcIntegrator<'a>,
    constant_wind: Option<(f64, f64)>,
    /// Weight on the squared negative part of the durations.
    bound_penalty: f64,
}

struct Evaluation {
    schedule: ArcSchedule,
    objective: f64,
    residuals: Vec<f64>,
}

impl<'a> SwitchingNlp<'a> {
    fn new(problem: &'a Problem, integrator: &IntegratorOptions) -> Self {
        let constant_wind = match problem.model.wind {
            WindField::Constant { wx, wy } => Some((wx, wy)),
            WindField::Polynomial(_) => None,
        };
        Self {
            problem,
            integ: ArcIntegrator::new(problem, integrator),
            constant_wind,
            bound_penalty: 1e3,
        }
    }

    fn time_scale(&self) -> f64 {
        self.integ.pmp.scaling.time
    }

    /// Encodes a schedule as decision variables.
    fn encode(&self, s: &ArcSchedule) -> Vec<f64> {
        let tc = self.time_scale();
        let d = [s.t1 / tc, (s.t2 - s.t1) / tc, (s.tf - s.t2) / tc];
        match self.constant_wind {
            Some(_) => d.to_vec(),
            None => vec![s.chi0, d[0], d[1], d[2]],
        }
    }

    /// Projects durations onto d ≥ 0 and returns the schedule together with
    /// the squared violation.
    fn decode(&self, z: &[f64]) -> Result<(ArcSchedule, f64)> {
        let tc = self.time_scale();
        let (chi0, d) = match self.constant_wind {
            Some(_) => (None, [z[0], z[1], z[2]]),
            None => (Some(z[0]), [z[1], z[2], z[3]]),
        };
        let violation: f64 = d.iter().map(|v| v.min(0.0).powi(2)).sum();
        let d = d.map(|v| v.max(0.0));
        let t1 = d[0] * tc;
        let t2 = t1 + d[1] * tc;
        let tf = t2 + d[2] * tc;
        let chi0 = match (chi0, self.constant_wind) {
            (Some(c), _) => c,
            (None, Some((wx, wy))) => chi0_constant_wind(&self.problem.scenario, wx, wy, tf)?,
            (None, None) => unreachable!(),
        };
        Ok((ArcSchedule { t1, t2, tf, chi0 }, violation))
    }

    fn evaluate_schedule(&self, z: &[f64]) -> Result<Evaluation> {
        let (schedule, violation) = self.decode(z)?;
        let term = self.integ.integrate_terminal(&schedule)?;
        let s = &self.problem.scenario;
        let sc = self.integ.pmp.scaling;
        let ex = (term.state[0] - s.xf_m) / sc.length;
        let ey = (term.state[1] - s.yf_m) / sc.length;
        let ev = (term.state[2] - s.vf_mps) / sc.speed;
        let residuals = match self.constant_wind {
            // cross-track vanishes identically by the choice of χ0
            Some(_) => {
                let (sin, cos) = schedule.chi0.sin_cos();
                vec![ex * cos + ey * sin, ev]
            }
            None => vec![ex, ey, ev],
        };
        let alpha = s.alpha;
        let objective =
            (alpha * schedule.tf + (alpha - 1.0) * term.state[3]) / self.time_scale() + self.bound_penalty * violation;
        Ok(Evaluation {
            schedule,
            objective,
            residuals,
        })
    }
}

impl ConstrainedProblem for SwitchingNlp<'_> {
    fn evaluate(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.evaluate_schedule(x).ok().map(|e| (e.objective, e.residuals))
    }
}

#[derive(Debug, Clone)]
struct StartOutcome {
    index: usize,
    z: Vec<f64>,
    objective: f64,
    constraint_norm: f64,
    iterations: u64,
    outer_iterations: usize,
    restarts: usize,
}

/// Deterministic candidate starts; see the ledger for the bang-arc scale.
fn start_grid(problem: &Problem) -> Vec<ArcSchedule> {
    let s = &problem.scenario;
    let tf0 = s.distance() / s.v0_mps;
    let t_bang = 2.0 * s.m0_kg * s.v0_mps / problem.model.max_thrust();
    let chi_geo = (s.yf_m - s.y0_m).atan2(s.xf_m - s.x0_m);
    let mut out = Vec::with_capacity(12);
    for factor in [0.9, 1.0, 1.1] {
        for (f1, f2) in [(0.2, 0.8), (0.3, 0.7)] {
            for dchi in [-0.2, 0.2] {
                let tf = factor * tf0;
                out.push(ArcSchedule {
                    t1: f1 * t_bang,
                    t2: tf - (1.0 - f2) * t_bang,
                    tf,
                    chi0: chi_geo + dchi,
                });
            }
        }
    }
    out
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn simplex_steps(z: &[f64], constant_wind: bool) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(i, v)| {
            if !constant_wind && i == 0 {
                0.05
            } else {
                (0.1 * v.abs()).max(0.02)
            }
        })
        .collect()
}

fn run_start(nlp: &SwitchingNlp<'_>, index: usize, start: &ArcSchedule, opts: &IndirectOptions) -> StartOutcome {
    let z0 = nlp.encode(start);
    let steps = simplex_steps(&z0, nlp.constant_wind.is_some());
    let res = augmented_lagrangian(nlp, &z0, &opts.aug_lag, |f, x, _, _| {
        nelder_mead(&f, x, &steps, &opts.nelder_mead)
    });
    StartOutcome {
        index,
        objective: res.objective,
        constraint_norm: res.constraint_norm,
        z: res.x,
        iterations: res.inner_iterations,
        outer_iterations: res.outer_iterations,
        restarts: res.restarts,
    }
}

/// Residual threshold for a coarse-grid start to count as feasible.
const COARSE_FEASIBILITY: f64 = 1e-3;

fn select_best(outcomes: &[StartOutcome]) -> Option<&StartOutcome> {
    let finite: Vec<&StartOutcome> = outcomes
        .iter()
        .filter(|o| o.objective.is_finite() && o.constraint_norm.is_finite())
        .collect();
    let feasible = finite
        .iter()
        .filter(|o| o.constraint_norm <= COARSE_FEASIBILITY)
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.index.cmp(&b.index)));
    feasible.copied().or_else(|| {
        finite.into_iter().min_by(|a, b| {
            a.constraint_norm
                .total_cmp(&b.constraint_norm)
                .then(a.index.cmp(&b.index))
        })
    })
}

/// Relative cost gap below which d2 = 0 is preferred.
const BANG_BANG_TIE: f64 = 1e-10;

/// Index of the singular duration d2 in the decision vector.
fn d2_index(nlp: &SwitchingNlp<'_>) -> usize {
    if nlp.constant_wind.is_some() {
        1
    } else {
        2
    }
}

struct Polished {
    z: Vec<f64>,
    constraint_norm: f64,
    iterations: u64,
}

/// Newton on the terminal conditions with d2 held fixed.
fn solve_fixed_d2(nlp: &SwitchingNlp<'_>, guess: &[f64], d2: f64, tol: f64) -> Option<(Vec<f64>, f64, usize)> {
    let k = d2_index(nlp);
    let full = |y: &[f64]| {
        let mut z = y.to_vec();
        z.insert(k, d2);
        z
    };
    let mut y0 = guess.to_vec();
    y0.remove(k);
    let residual = |y: &[f64]| nlp.evaluate_schedule(&full(y)).ok().map(|e| e.residuals);
    let r = newton(&residual, &y0, 1e-5, tol, 30)?;
    Some((full(&r.x), r.residual_norm, r.iterations))
}

fn polish(nlp: &SwitchingNlp<'_>, z_start: &[f64], opts: &IndirectOptions) -> Option<Polished> {
    let k = d2_index(nlp);
    let warm = RefCell::new(z_start.to_vec());
    // every converged inner solve, keyed by d2
    let solved: RefCell<Vec<(f64, f64, Vec<f64>)>> = RefCell::new(Vec::new());
    let accept = opts.feas_tol * 1e-2;
    let phi = |d2: f64| -> f64 {
        if d2 < 0.0 {
            return FAILED_EVALUATION;
        }
        let guess = warm.borrow().clone();
        let Some((z, rn, _)) = solve_fixed_d2(nlp, &guess, d2, opts.newton_tol) else {
            return FAILED_EVALUATION;
        };
        if rn > accept {
            return FAILED_EVALUATION;
        }
        match nlp.evaluate_schedule(&z) {
            Ok(e) => {
                // the boundary solve is a poor warm start for interior d2
                if d2 > 0.0 {
                    *warm.borrow_mut() = z.clone();
                }
                solved.borrow_mut().push((d2, rn, z));
                e.objective
            }
            Err(_) => FAILED_EVALUATION,
        }
    };

    let d2_0 = z_start[k].max(0.0);
    let mut lo = (0.8 * d2_0).max(0.0);
    let mut hi = 1.2 * d2_0 + 1e-3;
    let f_mid = phi(0.5 * (lo + hi));
    let mut f_lo = phi(lo);
    let mut f_hi = phi(hi);
    for _ in 0..8 {
        if f_lo < f_mid && lo > 0.0 {
            lo = (lo - (hi - lo)).max(0.0);
            f_lo = phi(lo);
        } else if f_hi < f_mid {
            hi += hi - lo;
            f_hi = phi(hi);
        } else {
            break;
        }
    }
    let (d2_best, f_best) = brent(&phi, lo, hi, 1e-9, 100);
    // the bang-bang boundary is a candidate in its own right
    let f_zero = if lo == 0.0 { f_lo } else { phi(0.0) };
    let mut candidates = vec![(0.0, f_zero), (d2_best, f_best), (lo, f_lo), (hi, f_hi)];
    candidates.retain(|(_, f)| f.is_finite() && *f < FAILED_EVALUATION);
    let (mut d2, f_min) = candidates.into_iter().min_by(|a, b| a.1.total_cmp(&b.1))?;
    // within Newton noise of the boundary the schedule is bang-bang
    if f_zero < FAILED_EVALUATION && f_zero - f_min <= BANG_BANG_TIE * f_min.abs().max(1.0) {
        d2 = 0.0;
    }
    let solved = solved.into_inner();
    let iterations = solved.len() as u64;
    let (_, rn, z) = solved.into_iter().rev().find(|(d, _, _)| *d == d2)?;
    Some(Polished {
        z,
        constraint_norm: rn,
        iterations,
    })
}

/// Solves the switching-point NLP and returns a verified solution.
pub fn solve_indirect(problem: &Problem, opts: &IndirectOptions) -> Result<Solution> {
    let coarse = IntegratorOptions {
        steps_per_arc: opts.global_steps_per_arc.max(1),
        ..opts.integrator
    };
    let nlp_coarse = SwitchingNlp::new(problem, &coarse);
    let nlp_fine = SwitchingNlp::new(problem, &opts.integrator);

    let mut grid = start_grid(problem);
    if nlp_coarse.constant_wind.is_some() {
        // χ0 is not a decision variable; the ± offsets collapse
        grid.dedup_by(|a, b| a.t1 == b.t1 && a.t2 == b.t2 && a.tf == b.tf);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    grid.shuffle(&mut rng);
    grid.truncate(opts.starts.max(1));

    let outcomes: Vec<StartOutcome> = grid
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_start(&nlp_coarse, i, s, opts))
        .collect();
    let mut meta = NlpMetadata {
        starts: outcomes.len(),
        feasible_starts: outcomes
            .iter()
            .filter(|o| o.constraint_norm <= COARSE_FEASIBILITY)
            .count(),
        iterations: outcomes.iter().map(|o| o.iterations).sum(),
        outer_iterations: outcomes.iter().map(|o| o.outer_iterations).sum(),
        restarts: outcomes.iter().map(|o| o.restarts).sum(),
        ..Default::default()
    };
    for o in &outcomes {
        log::debug!(
            "start {}: objective {:.9e}, residual {:.3e}, z = {:?}",
            o.index,
            o.objective,
            o.constraint_norm,
            o.z
        );
        if !o.objective.is_finite() {
            meta.start_errors.push(format!("start {}: evaluation failed", o.index));
        }
    }
    let best = select_best(&outcomes).ok_or(Error::Infeasible {
        starts: outcomes.len(),
        best_residual: f64::INFINITY,
    })?;
    meta.best_start = Some(best.index);

    let mut z = best.z.clone();
    if opts.polish {
        match polish(&nlp_fine, &z, opts) {
            Some(p) => {
                meta.iterations += p.iterations;
                meta.polished = true;
                log::debug!("polished: residual {:.3e}, z = {:?}", p.constraint_norm, p.z);
                z = p.z;
            }
            None => log::warn!("polish failed; keeping the multi-start result"),
        }
    }

    let eval = nlp_fine.evaluate_schedule(&z)?;
    let rn = norm_inf(&eval.residuals);
    meta.max_scaled_residual = rn;
    meta.converged = rn <= opts.feas_tol;
    if !meta.converged {
        return Err(Error::Infeasible {
            starts: outcomes.len(),
            best_residual: rn,
        });
    }
    build_solution(problem, &eval.schedule, opts, meta)
}

/// Integrates a schedule, attaches co-states and runs the checks.
pub fn build_solution(
    problem: &Problem,
    schedule: &ArcSchedule,
    opts: &IndirectOptions,
    nlp: NlpMetadata,
) -> Result<Solution> {
    let integ = ArcIntegrator::new(problem, &opts.integrator);
    let raw = integ.integrate(schedule)?;
    let (trajectory, verification) = match integ.reconstruct_costates(&raw) {
        Ok(t) => {
            let report = verify_solution(problem, &t, &opts.tolerances);
            (t, Some(report))
        }
        Err(e) => {
            log::warn!("co-state reconstruction failed: {e}");
            (raw, None)
        }
    };
    let s = &problem.scenario;
    let last = trajectory.final_sample();
    Ok(Solution {
        method: Method::Indirect,
        scenario: s.clone(),
        schedule: Some(*schedule),
        cost: trajectory.cost(),
        terminal_residuals: [last.state[0] - s.xf_m, last.state[1] - s.yf_m, last.state[2] - s.vf_mps],
        trajectory,
        verification,
        nlp,
    })
}

fn worst_window(samples: &[(f64, f64)]) -> String {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => format!(
            "violations in t ∈ [{:.3}, {:.3}] s ({} samples)",
            a.0,
            b.0,
            samples.len()
        ),
        _ => "ok".into(),
    }
}

/// Runs every check in [`VerificationReport`] on a trajectory. Never fails; missing
/// co-states fail every co-state check.
pub fn verify_solution(problem: &Problem, traj: &Trajectory, tol: &VerifyTolerances) -> VerificationReport {
    let alpha = traj.alpha;
    let samples = &traj.samples;
    let no_costates = || CheckResult::new(false, f64::NAN, "no co-states");
    let envelope = {
        let bad: Vec<(f64, f64)> = samples
            .iter()
            .filter(|s| !s.diag.envelope_ok)
            .map(|s| (s.t, s.diag.mach))
            .collect();
        let max_mach = samples.iter().fold(0.0f64, |m, s| m.max(s.diag.mach));
        CheckResult::new(bad.is_empty(), max_mach, worst_window(&bad))
    };
    if !traj.has_costates() {
        return VerificationReport {
            hamiltonian: no_costates(),
            switching: no_costates(),
            legendre_clebsch: no_costates(),
            transversality: no_costates(),
            heading: no_costates(),
            envelope,
        };
    }

    let h_err = samples
        .iter()
        .fold(0.0f64, |m, s| m.max((s.diag.h.unwrap_or(f64::NAN) + alpha).abs()));
    let hamiltonian = CheckResult::new(h_err <= tol.hamiltonian, h_err, format!("max |H + α| = {h_err:.3e}"));

    let sched = traj.schedule;
    let (t1, t2, tf) = sched.map(|s| (s.t1, s.t2, s.tf)).unwrap_or((0.0, 0.0, f64::INFINITY));
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for s in samples {
        let sv = s.diag.s.unwrap_or(f64::NAN);
        let violation = match s.phase {
            Phase::MaxThrust if s.t > 0.0 && s.t < t1 => sv.max(0.0),
            Phase::MinThrust if s.t > t2 && s.t < tf => (-sv).max(0.0),
            Phase::Singular => (sv.abs() - tol.switching).max(0.0),
            _ => 0.0,
        };
        let strict_fail = match s.phase {
            Phase::MaxThrust if s.t > 0.0 && s.t < t1 => !(sv < 0.0),
            Phase::MinThrust if s.t > t2 && s.t < tf => !(sv > 0.0),
            Phase::Singular => !(sv.abs() <= tol.switching),
            _ => false,
        };
        if strict_fail {
            bad.push((s.t, sv));
        }
        worst = worst.max(violation);
    }
    let max_sing_s = samples
        .iter()
        .filter(|s| s.phase == Phase::Singular)
        .fold(0.0f64, |m, s| m.max(s.diag.s.unwrap_or(f64::NAN).abs()));
    let switching = CheckResult::new(
        bad.is_empty(),
        max_sing_s,
        if bad.is_empty() {
            format!("max |S| on singular arc = {max_sing_s:.3e}")
        } else {
            worst_window(&bad)
        },
    );

    let lc_min = samples
        .iter()
        .filter(|s| s.phase == Phase::Singular)
        .filter_map(|s| s.diag.lc)
        .fold(f64::INFINITY, f64::min);
    let legendre_clebsch = CheckResult::new(
        !(lc_min < -tol.legendre_clebsch),
        lc_min,
        format!("min −<λ, D> = {lc_min:.3e}"),
    );

    let last = traj.final_sample();
    let scaling = crate::pmp::Scaling::default();
    let lm = last.costate.map(|c: Costate| c.to_si(&scaling)[3]).unwrap_or(f64::NAN);
    let lm_err = (lm - (alpha - 1.0)).abs();
    let transversality = CheckResult::new(
        lm_err <= tol.transversality,
        lm_err,
        format!("λ_m(tf) = {lm:.9}, target {:.9}", alpha - 1.0),
    );

    let chi_err = samples.iter().fold(0.0f64, |m, s| {
        let l = s.costate.unwrap().0;
        let r = (s.chi.sin() * l[0] - s.chi.cos() * l[1]).abs() / l[0].hypot(l[1]);
        m.max(r)
    });
    let heading = CheckResult::new(
        chi_err <= tol.heading,
        chi_err,
        format!("max heading residual = {chi_err:.3e}"),
    );

    let _ = problem;
    VerificationReport {
        hamiltonian,
        switching,
        legendre_clebsch,
        transversality,
        heading,
        envelope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::table1_problem;
    use crate::wind::WindConfig;
    use approx::assert_relative_eq;

    #[test]
    fn chi0_zero_wind_matches_geometry() {
        let s = table1_problem().scenario;
        let chi = chi0_constant_wind(&s, 0.0, 0.0, 5000.0).unwrap();
        assert_relative_eq!(chi, (7e5f64 / 1.5e6).atan(), max_relative = 1e-15);
        assert!((chi - 0.43663).abs() < 1e-5);
        // tf → 0 recovers the still-air heading
        assert_relative_eq!(
            chi0_constant_wind(&s, 40.0, -20.0, 0.0).unwrap(),
            chi,
            max_relative = 1e-15
        );
    }

    #[test]
    fn chi0_quadrant_and_degenerate_geometry() {
        let s = table1_problem().scenario;
        // strong headwind pushes the aim point behind the origin
        let chi = chi0_constant_wind(&s, 400.0, 0.0, 5000.0).unwrap();
        assert!(chi > std::f64::consts::FRAC_PI_2 && chi < std::f64::consts::PI);
        let degenerate = chi0_constant_wind(&s, 300.0, 140.0, 5000.0);
        assert!(matches!(degenerate, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn start_grid_is_deterministic_and_ordered() {
        let p = table1_problem();
        let g = start_grid(&p);
        assert_eq!(g.len(), 12);
        for s in &g {
            s.validate().unwrap();
        }
        assert_eq!(g, start_grid(&p));
    }

    #[test]
    fn encode_decode_round_trip() {
        let p = table1_problem();
        let nlp = SwitchingNlp::new(&p, &IntegratorOptions::default());
        let s = ArcSchedule {
            t1: 90.0,
            t2: 6000.0,
            tf: 6100.0,
            chi0: 0.3,
        };
        let (back, viol) = nlp.decode(&nlp.encode(&s)).unwrap();
        assert_eq!(viol, 0.0);
        assert_relative_eq!(back.t2, s.t2, max_relative = 1e-15);
        assert_relative_eq!(back.tf, s.tf, max_relative = 1e-15);
        // negative durations are projected and penalised
        let (proj, viol) = nlp.decode(&[0.3, -0.1, 1.0, 0.1]).unwrap();
        assert_eq!(proj.t1, 0.0);
        assert!(viol > 0.0);
    }

    #[test]
    fn verification_flags_wrong_switching_sign() {
        let p = table1_problem();
        let opts = IntegratorOptions::default();
        let integ = ArcIntegrator::new(&p, &opts);
        let s = ArcSchedule {
            t1: 90.0,
            t2: 6500.0,
            tf: 6580.0,
            chi0: 0.5,
        };
        let mut traj = integ.reconstruct_costates(&integ.integrate(&s).unwrap()).unwrap();
        let k = traj
            .samples
            .iter()
            .position(|x| x.phase == Phase::MaxThrust && x.t > 30.0)
            .unwrap();
        traj.samples[k].diag.s = Some(1.0);
        let report = verify_solution(&p, &traj, &VerifyTolerances::default());
        assert!(!report.switching.passed);
        assert!(report.switching.detail.contains("violations"));
    }

    #[test]
    fn constant_wind_problem_drops_heading_variable() {
        let p = table1_problem()
            .with_wind(WindConfig::Constant { wx: 40.0, wy: -20.0 })
            .unwrap();
        let nlp = SwitchingNlp::new(&p, &IntegratorOptions::default());
        assert_eq!(
            nlp.encode(&ArcSchedule {
                t1: 1.0,
                t2: 2.0,
                tf: 3.0,
                chi0: 0.0
            })
            .len(),
            3
        );
        let e = nlp.evaluate_schedule(&[0.09, 5.5, 0.08]).unwrap();
        assert_eq!(e.residuals.len(), 2);
    }
}
