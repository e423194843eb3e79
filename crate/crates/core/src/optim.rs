//! Optimisation plumbing shared by the indirect and direct solvers:
//! augmented-Lagrangian outer loop, Nelder–Mead and Brent (via argmin),
//! damped Newton on square systems, and a box-projected L-BFGS.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::brent::BrentOpt;
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Value substituted for objective evaluations that fail.
pub const FAILED_EVALUATION: f64 = 1e12;

struct Closure<'f, F>(&'f F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Closure<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let v = (self.0)(p);
        Ok(if v.is_finite() { v } else { FAILED_EVALUATION })
    }
}

struct ScalarClosure<'f, F>(&'f F);

impl<F: Fn(f64) -> f64> CostFunction for ScalarClosure<'_, F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, p: &f64) -> Result<f64, argmin::core::Error> {
        let v = (self.0)(*p);
        Ok(if v.is_finite() { v } else { FAILED_EVALUATION })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_iters: u64,
    /// Standard deviation of simplex values at which to stop.
    pub sd_tolerance: f64,
    /// Number of restarts from the best vertex with a fresh simplex.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 400,
            sd_tolerance: 1e-12,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: u64,
    pub restarts: usize,
}

fn simplex_around(x: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    let mut simplex = vec![x.to_vec()];
    for (i, step) in steps.iter().enumerate() {
        let mut v = x.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    simplex
}

/// Nelder–Mead from an axis-aligned simplex with edge lengths `steps`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let mut best = x0.to_vec();
    let mut best_value = Closure(f).cost(&best).unwrap_or(FAILED_EVALUATION);
    let mut iterations = 0;
    let mut step_scale = 1.0;
    for round in 0..=opts.restarts {
        let scaled: Vec<f64> = steps.iter().map(|s| s * step_scale).collect();
        let solver = match NelderMead::new(simplex_around(&best, &scaled)).with_sd_tolerance(opts.sd_tolerance) {
            Ok(s) => s,
            Err(_) => break,
        };
        let run = Executor::new(Closure(f), solver)
            .configure(|s| s.max_iters(opts.max_iters))
            .run();
        let Ok(res) = run else { break };
        let state = res.state();
        iterations += state.get_iter();
        if let Some(p) = state.get_best_param() {
            if state.get_best_cost() <= best_value {
                best_value = state.get_best_cost();
                best = p.clone();
            }
        }
        if round == 0 {
            step_scale = 0.1;
        }
    }
    Minimum {
        x: best,
        value: best_value,
        iterations,
        restarts: opts.restarts,
    }
}

/// Brent minimisation on [a, b].
pub fn brent<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_iters: u64) -> (f64, f64) {
    let solver = BrentOpt::new(a, b).set_tolerance(f64::EPSILON.sqrt(), tol);
    match Executor::new(ScalarClosure(f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
    {
        Ok(res) => {
            let s = res.state();
            (s.get_best_param().copied().unwrap_or(0.5 * (a + b)), s.get_best_cost())
        }
        Err(_) => {
            let m = 0.5 * (a + b);
            (m, f(m))
        }
    }
}

/// Augmented-Lagrangian outer loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugLagOptions {
    pub rho0: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    /// ‖c‖ must shrink by this factor per outer iteration to keep ρ.
    pub sufficient_decrease: f64,
    pub max_outer: usize,
    pub feas_tol: f64,
}

impl Default for AugLagOptions {
    fn default() -> Self {
        Self {
            rho0: 10.0,
            rho_growth: 10.0,
            rho_max: 1e9,
            sufficient_decrease: 0.25,
            max_outer: 12,
            feas_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugLagResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub constraint_norm: f64,
    pub outer_iterations: usize,
    pub inner_iterations: u64,
    pub restarts: usize,
    pub converged: bool,
}

/// Objective and equality constraints evaluated together.
pub trait ConstrainedProblem {
    /// Returns (objective, constraints) or `None` when the point cannot be
    /// evaluated.
    fn evaluate(&self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

fn norm_inf(c: &[f64]) -> f64 {
    c.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimises the augmented Lagrangian φ + μ·c + ρ/2 ‖c‖² with the supplied
/// inner minimiser, updating μ and ρ between rounds.
pub fn augmented_lagrangian<P, I>(problem: &P, x0: &[f64], opts: &AugLagOptions, mut inner: I) -> AugLagResult
where
    P: ConstrainedProblem + ?Sized,
    I: FnMut(&dyn Fn(&[f64]) -> f64, &[f64], &[f64], f64) -> Minimum,
{
    let mut x = x0.to_vec();
    let m = problem.evaluate(&x).map(|(_, c)| c.len()).unwrap_or(0);
    let mut mu = vec![0.0; m];
    let mut rho = opts.rho0;
    let mut prev_norm = f64::INFINITY;
    let mut result = AugLagResult {
        x: x.clone(),
        objective: f64::NAN,
        constraint_norm: f64::INFINITY,
        outer_iterations: 0,
        inner_iterations: 0,
        restarts: 0,
        converged: false,
    };
    if m == 0 {
        return result;
    }
    for outer in 0..opts.max_outer {
        let lagrangian = |z: &[f64]| match problem.evaluate(z) {
            Some((phi, c)) => {
                let lin: f64 = mu.iter().zip(&c).map(|(a, b)| a * b).sum();
                let quad: f64 = c.iter().map(|v| v * v).sum();
                phi + lin + 0.5 * rho * quad
            }
            None => FAILED_EVALUATION,
        };
        let min = inner(&lagrangian, &x, &mu, rho);
        result.inner_iterations += min.iterations;
        result.restarts += min.restarts;
        x = min.x;
        let Some((phi, c)) = problem.evaluate(&x) else {
            break;
        };
        let cn = norm_inf(&c);
        result.x = x.clone();
        result.objective = phi;
        result.constraint_norm = cn;
        result.outer_iterations = outer + 1;
        if cn <= opts.feas_tol {
            result.converged = true;
            break;
        }
        for (mi, ci) in mu.iter_mut().zip(&c) {
            *mi += rho * ci;
        }
        if cn > opts.sufficient_decrease * prev_norm {
            rho = (rho * opts.rho_growth).min(opts.rho_max);
        }
        prev_norm = cn;
    }
    result
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Damped Newton on a square system with a central-difference Jacobian.
/// Stops at `tol` (infinity norm) or when no step reduces the residual.
pub fn newton<F>(f: &F, x0: &[f64], fd_step: f64, tol: f64, max_iters: usize) -> Option<NewtonResult>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    if r.len() != n {
        return None;
    }
    let mut rn = norm_inf(&r);
    let mut iterations = 0;
    while rn > tol && iterations < max_iters {
        iterations += 1;
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = fd_step * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (rp, rm) = (f(&xp)?, f(&xm)?);
            for i in 0..n {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let step = jac.lu().solve(&-DVector::from_vec(r.clone()))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Some(rt) = f(&trial) {
                let tn = norm_inf(&rt);
                if tn < rn {
                    x = trial;
                    r = rt;
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some(NewtonResult {
        x,
        residual_norm: rn,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Bound on ‖P(x − ∇f) − x‖∞.
    pub pg_tol: f64,
    /// Relative objective change below which the run stops.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 2000,
            pg_tol: 1e-9,
            f_tol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(*l, *u);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((xi, gi), (l, u))| ((xi - gi).clamp(*l, *u) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with bound constraints enforced by projection. Variables at an
/// active bound whose gradient points outward are frozen for the step.
/// `fg` returns the value and gradient, or `None` if the point is invalid.
pub fn projected_lbfgs<F>(fg: &F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsOptions) -> Option<LbfgsResult>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut f, mut g) = fg(&x)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &g, lower, upper);
    while iterations < opts.max_iters && pg > opts.pg_tol {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let mask = |v: &mut Vec<f64>| {
            for (vi, fr) in v.iter_mut().zip(&free) {
                if !fr {
                    *vi = 0.0;
                }
            }
        };
        // two-loop recursion on the free subspace
        let mut q = g.clone();
        mask(&mut q);
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for j in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
            alphas[j] = rho * dot(&s_hist[j], &q);
            for (qi, yi) in q.iter_mut().zip(&y_hist[j]) {
                *qi -= alphas[j] * yi;
            }
        }
        if k > 0 {
            let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for j in 0..k {
            let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
            let beta = rho * dot(&y_hist[j], &q);
            for (qi, si) in q.iter_mut().zip(&s_hist[j]) {
                *qi += (alphas[j] - beta) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        mask(&mut d);
        if dot(&d, &g) >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            mask(&mut d);
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = if s_hist.is_empty() {
            (1.0 / d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut trial, lower, upper);
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(gi, (t, xi))| gi * (t - xi))
                .sum();
            if let Some((ft, gt)) = fg(&trial) {
                if ft <= f + 1e-4 * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let rel = (f - fnew).abs() / f.abs().max(1.0);
        x = xn;
        f = fnew;
        g = gn;
        pg = projected_gradient_norm(&x, &g, lower, upper);
        if rel < opts.f_tol {
            break;
        }
    }
    Some(LbfgsResult {
        x,
        value: f,
        iterations,
        projected_gradient: pg,
    })
}
