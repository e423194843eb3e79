//! Single-shooting direct transcription with forward Euler.
//!
//! Controls are piecewise constant on N equal intervals of [0, tf]; heading
//! and throttle are both free per node, so the baseline assumes neither the
//! Zermelo law nor the singular feedback. Decision vector
//! u = (χ_0..χ_{N−1}, Π_0..Π_{N−1}, τ_f) with τ_f = tf / T. Gradients of the
//! augmented Lagrangian come from the exact discrete adjoint of the Euler
//! recursion, and the throttle box is enforced by projection.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::atmosphere::check_envelope;
use crate::dynamics::Controls;
use crate::error::{Error, Result};
use crate::integrator::{Diagnostics, Phase, Sample, Trajectory};
use crate::optim::{augmented_lagrangian, projected_lbfgs, AugLagOptions, ConstrainedProblem, LbfgsOptions, Minimum};
use crate::pmp::Scaling;
use crate::scenario::Problem;
use crate::solver::{Method, NlpMetadata, Solution};

/// Node controls of the direct method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectGrid {
    pub chi: Vec<f64>,
    pub pi: Vec<f64>,
    /// Final time in seconds.
    pub tf: f64,
}

impl DirectGrid {
    pub fn nodes(&self) -> usize {
        self.chi.len()
    }

    pub fn validate(&self, pi_min: f64, pi_max: f64) -> Result<()> {
        if self.chi.len() < 2 || self.pi.len() != self.chi.len() {
            return Err(Error::validation(
                "nodes",
                "need N >= 2 nodes with one heading and one throttle each",
            ));
        }
        if !(self.tf > 0.0 && self.tf.is_finite()) {
            return Err(Error::validation(
                "tf",
                format!("final time {} s is not positive", self.tf),
            ));
        }
        if let Some(p) = self.pi.iter().find(|p| !(**p >= pi_min && **p <= pi_max)) {
            return Err(Error::validation(
                "pi",
                format!("throttle {p} outside [{pi_min}, {pi_max}]"),
            ));
        }
        Ok(())
    }

    /// Heading at the node start times and throttle averaged over each node
    /// interval, so a switch inside an interval is represented by its duty
    /// fraction rather than rounded to the node.
    pub fn from_trajectory(traj: &Trajectory, nodes: usize) -> Self {
        let tf = traj.final_sample().t;
        let samples = &traj.samples;
        let node_t = |k: usize| tf * k as f64 / nodes as f64;
        // Throttle on (a.t, b.t) is linear within an arc; a junction sample
        // belongs to the arc it starts, so the interval keeps a's value.
        let pi_on = |a: &Sample, b: &Sample, t: f64| {
            if a.phase == b.phase {
                a.pi + (t - a.t) / (b.t - a.t) * (b.pi - a.pi)
            } else {
                a.pi
            }
        };
        let mut chi = Vec::with_capacity(nodes);
        let mut pi = Vec::with_capacity(nodes);
        let mut j = 0;
        for k in 0..nodes {
            let (t0, t1) = (node_t(k), node_t(k + 1));
            while j + 1 < samples.len() && samples[j + 1].t <= t0 {
                j += 1;
            }
            let a = &samples[j];
            chi.push(match samples.get(j + 1) {
                Some(b) if b.t > a.t => a.chi + (t0 - a.t) / (b.t - a.t) * (b.chi - a.chi),
                _ => a.chi,
            });
            // Midpoint rule per linear piece is exact.
            let mut integral = 0.0;
            let (mut lo_pi, mut hi_pi) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut i = j;
            while i + 1 < samples.len() && samples[i].t < t1 {
                let (a, b) = (&samples[i], &samples[i + 1]);
                let (lo, hi) = (a.t.max(t0), b.t.min(t1));
                if hi > lo {
                    let v = pi_on(a, b, 0.5 * (lo + hi));
                    integral += (hi - lo) * v;
                    lo_pi = lo_pi.min(v);
                    hi_pi = hi_pi.max(v);
                }
                i += 1;
            }
            // Clamped so rounding never pushes the mean past a bound.
            pi.push(if hi_pi >= lo_pi {
                (integral / (t1 - t0)).clamp(lo_pi, hi_pi)
            } else {
                a.pi
            });
        }
        Self { chi, pi, tf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectOptions {
    pub nodes: usize,
    pub feas_tol: f64,
    pub aug_lag: AugLagOptions,
    pub lbfgs: LbfgsOptions,
    pub scaling: Scaling,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            nodes: 400,
            feas_tol: 1e-6,
            aug_lag: AugLagOptions {
                max_outer: 30,
                ..AugLagOptions::default()
            },
            lbfgs: LbfgsOptions {
                max_iters: 3000,
                pg_tol: 1e-10,
                ..LbfgsOptions::default()
            },
            scaling: Scaling::default(),
        }
    }
}

/// Forward-Euler rollout of the controls; returns the N + 1 node states.
pub fn euler_rollout(problem: &Problem, grid: &DirectGrid) -> Result<Vec<Vector4<f64>>> {
    let model = &problem.model;
    let n = grid.nodes();
    let h = grid.tf / n as f64;
    let mut xs = Vec::with_capacity(n + 1);
    let mut x = problem.scenario.initial_state();
    model.check_state(&x)?;
    xs.push(x);
    for k in 0..n {
        let f = model.eval_f(
            &x,
            Controls {
                chi: grid.chi[k],
                pi: grid.pi[k],
            },
        );
        x += f * h;
        model.check_state(&x).map_err(|e| e.at_time(h * (k + 1) as f64))?;
        xs.push(x);
    }
    Ok(xs)
}

struct DirectNlp<'a> {
    problem: &'a Problem,
    nodes: usize,
    scaling: Scaling,
}

impl DirectNlp<'_> {
    fn grid(&self, u: &[f64]) -> DirectGrid {
        let n = self.nodes;
        DirectGrid {
            chi: u[..n].to_vec(),
            pi: u[n..2 * n].to_vec(),
            tf: u[2 * n] * self.scaling.time,
        }
    }

    fn encode(&self, g: &DirectGrid) -> Vec<f64> {
        let mut u = Vec::with_capacity(2 * self.nodes + 1);
        u.extend_from_slice(&g.chi);
        u.extend_from_slice(&g.pi);
        u.push(g.tf / self.scaling.time);
        u
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes;
        let s = &self.problem.scenario;
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        lo.extend(std::iter::repeat_n(s.pi_min, n));
        hi.extend(std::iter::repeat_n(s.pi_max, n));
        lo.push(1e-3);
        hi.push(f64::INFINITY);
        (lo, hi)
    }

    fn objective_and_constraints(&self, xs: &[Vector4<f64>], tf: f64) -> (f64, Vec<f64>) {
        let s = &self.problem.scenario;
        let sc = &self.scaling;
        let last = xs.last().expect("rollout has states");
        let phi = (s.alpha * tf + (s.alpha - 1.0) * last[3]) / sc.time;
        let c = vec![
            (last[0] - s.xf_m) / sc.length,
            (last[1] - s.yf_m) / sc.length,
            (last[2] - s.vf_mps) / sc.speed,
        ];
        (phi, c)
    }

    /// Augmented Lagrangian and its gradient by the discrete adjoint.
    fn lagrangian_with_gradient(&self, u: &[f64], mu: &[f64], rho: f64) -> Option<(f64, Vec<f64>)> {
        let grid = self.grid(u);
        let xs = euler_rollout(self.problem, &grid).ok()?;
        let (phi, c) = self.objective_and_constraints(&xs, grid.tf);
        let s = &self.problem.scenario;
        let sc = &self.scaling;
        let model = &self.problem.model;
        let n = self.nodes;
        let h = grid.tf / n as f64;

        let w: Vec<f64> = mu.iter().zip(&c).map(|(m, ci)| m + rho * ci).collect();
        let value = phi
            + mu.iter().zip(&c).map(|(m, ci)| m * ci).sum::<f64>()
            + 0.5 * rho * c.iter().map(|v| v * v).sum::<f64>();
        let mut p = Vector4::new(
            w[0] / sc.length,
            w[1] / sc.length,
            w[2] / sc.speed,
            (s.alpha - 1.0) / sc.time,
        );
        let mut grad = vec![0.0; 2 * n + 1];
        let mut d_h = 0.0;
        for k in (0..n).rev() {
            let x = &xs[k];
            let (chi, pi) = (grid.chi[k], grid.pi[k]);
            let pv = model.eval_p(x);
            let f = model.eval_q(x, chi) + pv * pi;
            grad[k] = h * p.dot(&model.dq_dchi(x, chi));
            grad[n + k] = h * p.dot(&pv);
            d_h += p.dot(&f);
            let jac = model.jacobian_q(x, chi) + model.jacobian_p(x) * pi;
            p += jac.transpose() * p * h;
        }
        grad[2 * n] = sc.time * (s.alpha / sc.time + d_h / n as f64);
        Some((value, grad))
    }
}

impl ConstrainedProblem for DirectNlp<'_> {
    fn evaluate(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let grid = self.grid(u);
        let xs = euler_rollout(self.problem, &grid).ok()?;
        Some(self.objective_and_constraints(&xs, grid.tf))
    }
}

/// Throttle that holds the initial airspeed, clipped to the bounds.
fn trim_throttle(problem: &Problem) -> f64 {
    let model = &problem.model;
    let s = &problem.scenario;
    let x0 = s.initial_state();
    let decel = -model.eval_q(&x0, 0.0)[2];
    let accel = model.eval_p(&x0)[2];
    (decel / accel).clamp(s.pi_min, s.pi_max)
}

/// Straight-line heading, trim throttle and tf from distance over v0.
pub fn cold_start(problem: &Problem, nodes: usize) -> DirectGrid {
    let s = &problem.scenario;
    let chi = (s.yf_m - s.y0_m).atan2(s.xf_m - s.x0_m);
    DirectGrid {
        chi: vec![chi; nodes],
        pi: vec![trim_throttle(problem); nodes],
        tf: s.distance() / s.v0_mps,
    }
}

/// Builds the sampled trajectory of a direct solution.
fn direct_trajectory(problem: &Problem, grid: &DirectGrid, xs: &[Vector4<f64>]) -> Result<Trajectory> {
    let model = &problem.model;
    let n = grid.nodes();
    let h = grid.tf / n as f64;
    let mut samples = Vec::with_capacity(n + 1);
    for (k, x) in xs.iter().enumerate() {
        let j = k.min(n - 1);
        let env = check_envelope(&model.aircraft, &model.atmosphere, x[2], model.h)?;
        samples.push(Sample {
            t: if k == n { grid.tf } else { h * k as f64 },
            state: *x,
            chi: grid.chi[j],
            pi: grid.pi[j],
            phase: Phase::Direct,
            costate: None,
            diag: Diagnostics {
                mach: env.mach,
                envelope_ok: env.all_ok(),
                cas_violated: !env.cas_ok(),
                ..Diagnostics::default()
            },
        });
    }
    Ok(Trajectory {
        samples,
        alpha: problem.scenario.alpha,
        schedule: None,
        clamp_count: 0,
    })
}

/// Solves the direct transcription, optionally from a warm start.
pub fn solve_direct(
    problem: &Problem,
    opts: &DirectOptions,
    warm: Option<&DirectGrid>,
) -> Result<(Solution, DirectGrid)> {
    let nodes = opts.nodes;
    let s = &problem.scenario;
    let start = match warm {
        Some(g) if g.nodes() == nodes => g.clone(),
        Some(g) => resample(g, nodes),
        None => cold_start(problem, nodes),
    };
    let mut start = start;
    for p in start.pi.iter_mut() {
        *p = p.clamp(s.pi_min, s.pi_max);
    }
    start.validate(s.pi_min, s.pi_max)?;
    let nlp = DirectNlp {
        problem,
        nodes,
        scaling: opts.scaling,
    };
    let u0 = nlp.encode(&start);
    if nlp.evaluate(&u0).is_none() {
        return Err(Error::Infeasible {
            starts: 1,
            best_residual: f64::INFINITY,
        });
    }
    let (lo, hi) = nlp.bounds();
    let al = AugLagOptions {
        feas_tol: opts.feas_tol,
        ..opts.aug_lag
    };
    let res = augmented_lagrangian(&nlp, &u0, &al, |f, x, mu, rho| {
        let fg = |u: &[f64]| nlp.lagrangian_with_gradient(u, mu, rho);
        match projected_lbfgs(&fg, x, &lo, &hi, &opts.lbfgs) {
            Some(r) => Minimum {
                value: r.value,
                x: r.x,
                iterations: r.iterations as u64,
                restarts: 0,
            },
            None => Minimum {
                x: x.to_vec(),
                value: f(x),
                iterations: 0,
                restarts: 0,
            },
        }
    });
    log::debug!(
        "direct: objective {:.9e}, residual {:.3e}, outer {}, inner {}",
        res.objective,
        res.constraint_norm,
        res.outer_iterations,
        res.inner_iterations
    );
    if !res.converged {
        return Err(Error::Infeasible {
            starts: 1,
            best_residual: res.constraint_norm,
        });
    }
    let grid = nlp.grid(&res.x);
    let xs = euler_rollout(problem, &grid)?;
    let trajectory = direct_trajectory(problem, &grid, &xs)?;
    let last = trajectory.final_sample();
    let solution = Solution {
        method: Method::Direct,
        scenario: s.clone(),
        schedule: None,
        cost: trajectory.cost(),
        terminal_residuals: [last.state[0] - s.xf_m, last.state[1] - s.yf_m, last.state[2] - s.vf_mps],
        trajectory,
        verification: None,
        nlp: NlpMetadata {
            iterations: res.inner_iterations,
            outer_iterations: res.outer_iterations,
            restarts: res.restarts,
            starts: 1,
            feasible_starts: 1,
            best_start: Some(0),
            converged: true,
            max_scaled_residual: res.constraint_norm,
            polished: false,
            start_errors: Vec::new(),
        },
    };
    Ok((solution, grid))
}

/// Piecewise-constant resampling of node controls onto a new grid.
pub fn resample(grid: &DirectGrid, nodes: usize) -> DirectGrid {
    let n = grid.nodes();
    let pick = |v: &[f64], k: usize| v[((k as f64 + 0.5) * n as f64 / nodes as f64) as usize % n.max(1)];
    DirectGrid {
        chi: (0..nodes).map(|k| pick(&grid.chi, k)).collect(),
        pi: (0..nodes).map(|k| pick(&grid.pi, k)).collect(),
        tf: grid.tf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::table1_problem;
    use approx::assert_relative_eq;

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let p = table1_problem();
        let nodes = 12;
        let nlp = DirectNlp {
            problem: &p,
            nodes,
            scaling: Scaling::default(),
        };
        let mut g = cold_start(&p, nodes);
        g.tf = 900.0;
        for k in 0..nodes {
            g.chi[k] += 0.05 * (k as f64).sin();
            g.pi[k] += 0.02 * (k as f64).cos();
        }
        let u = nlp.encode(&g);
        let mu = [0.3, -0.2, 0.1];
        let rho = 50.0;
        let (_, grad) = nlp.lagrangian_with_gradient(&u, &mu, rho).unwrap();
        for i in 0..u.len() {
            let h = 1e-6 * u[i].abs().max(1.0);
            let mut up = u.clone();
            let mut um = u.clone();
            up[i] += h;
            um[i] -= h;
            let fp = nlp.lagrangian_with_gradient(&up, &mu, rho).unwrap().0;
            let fm = nlp.lagrangian_with_gradient(&um, &mu, rho).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn trim_throttle_holds_speed() {
        let p = table1_problem();
        let pi = trim_throttle(&p);
        assert!(pi > 0.0 && pi < 1.0);
        let x0 = p.scenario.initial_state();
        let f = p.model.eval_f(&x0, Controls { chi: 0.0, pi });
        assert!(f[2].abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        let g = DirectGrid {
            chi: vec![0.0],
            pi: vec![0.5],
            tf: 10.0,
        };
        assert!(g.validate(0.0, 1.0).is_err());
        let g = DirectGrid {
            chi: vec![0.0; 3],
            pi: vec![0.5, 1.5, 0.2],
            tf: 10.0,
        };
        assert!(matches!(g.validate(0.0, 1.0), Err(Error::Validation { .. })));
    }

    #[test]
    fn resample_preserves_constant_controls() {
        let g = DirectGrid {
            chi: vec![0.4; 10],
            pi: vec![0.6; 10],
            tf: 100.0,
        };
        let r = resample(&g, 25);
        assert_eq!(r.nodes(), 25);
        assert!(r.pi.iter().all(|p| *p == 0.6));
    }
}
