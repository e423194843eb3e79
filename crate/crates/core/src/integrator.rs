//! Fixed-step RK4 integration of the heading-augmented dynamics over the
//! max-thrust / singular / min-thrust partition, and co-state
//! reconstruction along the result.

use nalgebra::{SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::atmosphere::check_envelope;
use crate::dynamics::Controls;
use crate::error::{Error, Result};
use crate::pmp::{Costate, PmpOptions, Pontryagin, Scaling};
use crate::scenario::Problem;

type Vector5 = SVector<f64, 5>;

/// Switching times and initial heading. Times in seconds from t0 = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSchedule {
    pub t1: f64,
    pub t2: f64,
    pub tf: f64,
    pub chi0: f64,
}

impl ArcSchedule {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.t1, self.t2, self.tf, self.chi0].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidSchedule(format!("non-finite entry in {self:?}")));
        }
        if !(0.0 <= self.t1 && self.t1 <= self.t2 && self.t2 <= self.tf && self.tf > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 <= t1 <= t2 <= tf, tf > 0; got t1 = {}, t2 = {}, tf = {}",
                self.t1, self.t2, self.tf
            )));
        }
        Ok(())
    }

    pub fn has_singular_arc(&self) -> bool {
        self.t2 > self.t1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    MaxThrust,
    Singular,
    MinThrust,
    /// Piecewise-constant controls of the direct method.
    Direct,
}

/// Throttle law on the singular arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SingularLaw {
    /// Feedback from S⁽²⁾ = 0 with the algebraically solved co-state.
    Costate { alpha: f64 },
    /// det M̄ transport; used for α = 0.
    DetTransport,
}

impl SingularLaw {
    pub fn for_alpha(alpha: f64) -> Self {
        if alpha == 0.0 {
            SingularLaw::DetTransport
        } else {
            SingularLaw::Costate { alpha }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub steps_per_arc: usize,
    pub pmp: PmpOptions,
    pub scaling: Scaling,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            steps_per_arc: 400,
            pmp: PmpOptions::default(),
            scaling: Scaling::default(),
        }
    }
}

/// Per-sample diagnostics. Co-state dependent entries are `None` until
/// co-states are attached.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub s: Option<f64>,
    pub h: Option<f64>,
    /// −<λ, D>, singular samples only.
    pub lc: Option<f64>,
    pub det_m: Option<f64>,
    pub mach: f64,
    pub envelope_ok: bool,
    pub cas_violated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// (x, y, v, m) in SI units.
    pub state: Vector4<f64>,
    pub chi: f64,
    pub pi: f64,
    pub phase: Phase,
    pub costate: Option<Costate>,
    pub diag: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub alpha: f64,
    pub schedule: Option<ArcSchedule>,
    /// Singular-throttle evaluations that hit a bound.
    pub clamp_count: usize,
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    /// α t_f + (α − 1) m(t_f).
    pub fn cost(&self) -> f64 {
        let last = self.final_sample();
        self.alpha * last.t + (self.alpha - 1.0) * last.state[3]
    }

    pub fn has_costates(&self) -> bool {
        self.samples.iter().all(|s| s.costate.is_some())
    }
}

/// State and heading at t_f without stored samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalState {
    pub state: Vector4<f64>,
    pub chi: f64,
    pub clamp_count: usize,
}

/// Arc-wise RK4 driver bound to a problem.
#[derive(Debug, Clone)]
pub struct ArcIntegrator<'a> {
    pub pmp: Pontryagin<'a>,
    pub law: SingularLaw,
    pub pi_min: f64,
    pub pi_max: f64,
    pub x0: Vector4<f64>,
    pub steps_per_arc: usize,
}

struct Arc {
    phase: Phase,
    t_start: f64,
    t_end: f64,
}

fn arcs_of(schedule: &ArcSchedule) -> Vec<Arc> {
    [
        (Phase::MaxThrust, 0.0, schedule.t1),
        (Phase::Singular, schedule.t1, schedule.t2),
        (Phase::MinThrust, schedule.t2, schedule.tf),
    ]
    .into_iter()
    .filter(|(_, a, b)| b > a)
    .map(|(phase, t_start, t_end)| Arc { phase, t_start, t_end })
    .collect()
}

#[inline]
fn split5(z: &Vector5) -> (Vector4<f64>, f64) {
    (Vector4::new(z[0], z[1], z[2], z[3]), z[4])
}

#[inline]
fn join5(x: &Vector4<f64>, chi: f64) -> Vector5 {
    Vector5::new(x[0], x[1], x[2], x[3], chi)
}

#[inline]
fn rk4<const N: usize>(
    z: &SVector<f64, N>,
    dt: f64,
    mut f: impl FnMut(&SVector<f64, N>) -> Result<SVector<f64, N>>,
) -> Result<SVector<f64, N>> {
    let k1 = f(z)?;
    let k2 = f(&(z + k1 * (0.5 * dt)))?;
    let k3 = f(&(z + k2 * (0.5 * dt)))?;
    let k4 = f(&(z + k3 * dt))?;
    Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

impl<'a> ArcIntegrator<'a> {
    pub fn new(problem: &'a Problem, options: &IntegratorOptions) -> Self {
        let s = &problem.scenario;
        Self {
            pmp: Pontryagin::with_options(&problem.model, options.scaling, options.pmp),
            law: SingularLaw::for_alpha(s.alpha),
            pi_min: s.pi_min,
            pi_max: s.pi_max,
            x0: s.initial_state(),
            steps_per_arc: options.steps_per_arc.max(1),
        }
    }

    /// Unclamped singular throttle.
    pub fn singular_pi(&self, x: &Vector4<f64>, chi: f64) -> Result<f64> {
        self.pmp.model.check_state(x)?;
        match self.law {
            SingularLaw::Costate { alpha } => Ok(self.pmp.singular_throttle(x, chi, alpha)?.pi),
            SingularLaw::DetTransport => self.pmp.singular_throttle_alpha0(x, chi),
        }
    }

    /// Throttle for the phase, and whether it was clamped.
    pub fn throttle(&self, phase: Phase, x: &Vector4<f64>, chi: f64) -> Result<(f64, bool)> {
        match phase {
            Phase::MaxThrust => Ok((self.pi_max, false)),
            Phase::MinThrust => Ok((self.pi_min, false)),
            Phase::Singular => {
                let pi = self.singular_pi(x, chi)?;
                let clamped = pi.clamp(self.pi_min, self.pi_max);
                Ok((clamped, clamped != pi))
            }
            Phase::Direct => Err(Error::InvalidSchedule("direct phase has no feedback".into())),
        }
    }

    fn state_rhs(&self, phase: Phase, z: &Vector5, clamps: &mut usize) -> Result<Vector5> {
        let (x, chi) = split5(z);
        let (pi, clamped) = self.throttle(phase, &x, chi)?;
        *clamps += usize::from(clamped);
        let f = self.pmp.model.eval_f(&x, Controls { chi, pi });
        Ok(join5(&f, self.pmp.model.heading_rate(&x, chi)))
    }

    fn check_finite(t: f64, z: &[f64]) -> Result<()> {
        if z.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                t,
                state: format!("{z:?}"),
            })
        }
    }

    /// Integrates the schedule, calling `visit(t, state, χ, phase)` at every
    /// step boundary. The junction sample belongs to the arc it starts.
    fn run(
        &self,
        schedule: &ArcSchedule,
        mut visit: impl FnMut(f64, &Vector4<f64>, f64, Phase),
    ) -> Result<(Vector5, usize)> {
        schedule.validate()?;
        self.pmp.model.check_state(&self.x0)?;
        let arcs = arcs_of(schedule);
        let mut z = join5(&self.x0, schedule.chi0);
        let mut clamps = 0usize;
        for (k, arc) in arcs.iter().enumerate() {
            let n = self.steps_per_arc;
            let dt = (arc.t_end - arc.t_start) / n as f64;
            for i in 0..n {
                let t = arc.t_start + dt * i as f64;
                let (x, chi) = split5(&z);
                visit(t, &x, chi, arc.phase);
                z = rk4(&z, dt, |w| self.state_rhs(arc.phase, w, &mut clamps)).map_err(|e| e.at_time(t))?;
                Self::check_finite(t + dt, z.as_slice())?;
                self.pmp
                    .model
                    .check_state(&split5(&z).0)
                    .map_err(|e| e.at_time(t + dt))?;
            }
            if k + 1 == arcs.len() {
                let (x, chi) = split5(&z);
                visit(arc.t_end, &x, chi, arc.phase);
            }
        }
        Ok((z, clamps))
    }

    pub fn integrate_terminal(&self, schedule: &ArcSchedule) -> Result<TerminalState> {
        let (z, clamp_count) = self.run(schedule, |_, _, _, _| {})?;
        let (state, chi) = split5(&z);
        Ok(TerminalState {
            state,
            chi,
            clamp_count,
        })
    }

    pub fn integrate(&self, schedule: &ArcSchedule) -> Result<Trajectory> {
        let mut samples = Vec::with_capacity(3 * self.steps_per_arc + 1);
        let (_, clamp_count) = self.run(schedule, |t, x, chi, phase| {
            samples.push(Sample {
                t,
                state: *x,
                chi,
                pi: f64::NAN,
                phase,
                costate: None,
                diag: Diagnostics::default(),
            });
        })?;
        let model = self.pmp.model;
        for s in samples.iter_mut() {
            let (pi, _) = self.throttle(s.phase, &s.state, s.chi).map_err(|e| e.at_time(s.t))?;
            s.pi = pi;
            let env = check_envelope(&model.aircraft, &model.atmosphere, s.state[2], model.h)?;
            s.diag.mach = env.mach;
            s.diag.envelope_ok = env.all_ok();
            s.diag.cas_violated = !env.cas_ok();
            s.diag.det_m = Some(self.pmp.det_m(&s.state, s.chi));
        }
        Ok(Trajectory {
            samples,
            alpha: match self.law {
                SingularLaw::Costate { alpha } => alpha,
                SingularLaw::DetTransport => 0.0,
            },
            schedule: Some(*schedule),
            clamp_count,
        })
    }

    /// Integrates the co-state ODE from sample `from` to sample `to` (either
    /// direction) on the stored state history. The state is never
    /// re-integrated: RK4 midpoints use the cubic Hermite interpolant of the
    /// neighbouring samples, which keeps fourth order without running the
    /// state dynamics in their unstable direction.
    fn sweep_costate(
        &self,
        samples: &[Sample],
        from: usize,
        to: usize,
        lam0: Vector4<f64>,
    ) -> Result<Vec<Vector4<f64>>> {
        let mut out = Vec::with_capacity(from.abs_diff(to));
        let mut lam = lam0;
        let mut idx = from;
        while idx != to {
            let next = if to > from { idx + 1 } else { idx - 1 };
            // the arc governing the step is that of the earlier sample
            let phase = samples[idx.min(next)].phase;
            let (a, b) = (&samples[idx], &samples[next]);
            let dt = b.t - a.t;
            let rate = |x: &Vector4<f64>, chi: f64| -> Result<(Vector4<f64>, f64)> {
                let (pi, _) = self.throttle(phase, x, chi)?;
                Ok((
                    self.pmp.model.eval_f(x, Controls { chi, pi }),
                    self.pmp.model.heading_rate(x, chi),
                ))
            };
            let (fa, ca) = rate(&a.state, a.chi).map_err(|e| e.at_time(a.t))?;
            let (fb, cb) = rate(&b.state, b.chi).map_err(|e| e.at_time(b.t))?;
            let x_mid = (a.state + b.state) * 0.5 + (fa - fb) * (dt / 8.0);
            let chi_mid = 0.5 * (a.chi + b.chi) + (ca - cb) * (dt / 8.0);
            let g = |x: &Vector4<f64>, chi: f64, l: &Vector4<f64>| -> Result<Vector4<f64>> {
                let (pi, _) = self.throttle(phase, x, chi)?;
                Ok(self.pmp.costate_rhs(x, &Costate(*l), Controls { chi, pi }) / self.pmp.scaling.time)
            };
            let at = |e: Error| e.at_time(a.t);
            let k1 = g(&a.state, a.chi, &lam).map_err(at)?;
            let k2 = g(&x_mid, chi_mid, &(lam + k1 * (dt / 2.0))).map_err(at)?;
            let k3 = g(&x_mid, chi_mid, &(lam + k2 * (dt / 2.0))).map_err(at)?;
            let k4 = g(&b.state, b.chi, &(lam + k3 * dt)).map_err(at)?;
            lam += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            Self::check_finite(b.t, lam.as_slice())?;
            out.push(lam);
            idx = next;
        }
        Ok(out)
    }

    /// Fills co-states and co-state diagnostics. For α > 0 the singular arc
    /// uses the algebraic solve and the bang arcs are integrated away from
    /// its endpoints. For α = 0 the null vector of M̄ at t1 is carried by
    /// the co-state ODE and normalised so that λ_m(t_f) = −1 in SI units.
    pub fn reconstruct_costates(&self, traj: &Trajectory) -> Result<Trajectory> {
        let schedule = traj
            .schedule
            .ok_or_else(|| Error::InvalidSchedule("trajectory has no arc schedule".into()))?;
        let samples = &traj.samples;
        let n = samples.len();
        let mut lam: Vec<Option<Vector4<f64>>> = vec![None; n];
        let fill = |lam: &mut Vec<Option<Vector4<f64>>>, from: usize, to: usize, seed: Vector4<f64>| -> Result<()> {
            let sweep = self.sweep_costate(samples, from, to, seed)?;
            for (k, l) in sweep.into_iter().enumerate() {
                let i = if to > from { from + 1 + k } else { from - 1 - k };
                lam[i] = Some(l);
            }
            Ok(())
        };

        if !schedule.has_singular_arc() {
            for (i, l) in self.bang_bang_costates(traj)?.into_iter().enumerate() {
                lam[i] = Some(l);
            }
        } else {
            let i1 = samples
                .iter()
                .position(|s| s.phase == Phase::Singular)
                .expect("singular arc has samples");
            // sample i2 is the t2 junction, the first sample of the min-thrust arc
            let i2 = samples
                .iter()
                .position(|s| s.t >= schedule.t2 && s.phase != Phase::Singular)
                .unwrap_or(n - 1);
            match self.law {
                SingularLaw::Costate { alpha } => {
                    for i in i1..=i2 {
                        let s = &samples[i];
                        let c = self
                            .pmp
                            .solve_costates_on_singular(&s.state, s.chi, alpha)
                            .map_err(|e| e.at_time(s.t))?;
                        lam[i] = Some(c.0);
                    }
                    let (seed1, seed2) = (lam[i1].unwrap(), lam[i2].unwrap());
                    fill(&mut lam, i1, 0, seed1)?;
                    fill(&mut lam, i2, n - 1, seed2)?;
                }
                SingularLaw::DetTransport => {
                    // seed at t2: backward over the long arcs is the stable direction
                    let s2 = &samples[i2];
                    let seed = self.pmp.null_costate(&s2.state, s2.chi).0;
                    lam[i2] = Some(seed);
                    fill(&mut lam, i2, n - 1, seed)?;
                    fill(&mut lam, i2, 0, seed)?;
                    let lm_si = Costate(lam[n - 1].unwrap()).to_si(&self.pmp.scaling)[3];
                    if lm_si == 0.0 || !lm_si.is_finite() {
                        return Err(Error::DegenerateArc { value: lm_si });
                    }
                    let k = -1.0 / lm_si;
                    for l in lam.iter_mut().flatten() {
                        *l *= k;
                    }
                }
            }
        }

        let mut out = traj.clone();
        for (s, l) in out.samples.iter_mut().zip(lam) {
            let c = Costate(l.expect("every sample visited"));
            s.costate = Some(c);
            s.diag.s = Some(self.pmp.switching_function(&s.state, &c));
            s.diag.h = Some(self.pmp.hamiltonian(&s.state, &c, Controls { chi: s.chi, pi: s.pi }));
            if s.phase == Phase::Singular {
                let (_, d) = self.pmp.lie_b_d(&s.state, s.chi);
                s.diag.lc = Some(-c.0.dot(&d));
            }
        }
        Ok(out)
    }

    /// Co-states of a schedule without a singular arc. The co-state ODE is
    /// linear, so the terminal co-state a·u + b·e_v + λ_m e_m with u along
    /// the final heading satisfies the heading law, and a, b follow from
    /// H(tf) = −α and S = 0 at the switch.
    fn bang_bang_costates(&self, traj: &Trajectory) -> Result<Vec<Vector4<f64>>> {
        let samples = &traj.samples;
        let n = samples.len();
        let alpha = traj.alpha;
        let ks = samples
            .iter()
            .position(|s| s.phase != Phase::MaxThrust)
            .filter(|&k| k > 0 && k < n - 1)
            .ok_or_else(|| Error::InvalidSchedule("bang-bang co-states need an interior switch".into()))?;
        let last = &samples[n - 1];
        let lm = Costate::from_si(&Vector4::new(0.0, 0.0, 0.0, alpha - 1.0), &self.pmp.scaling).0[3];
        let basis = [
            Vector4::new(last.chi.cos(), last.chi.sin(), 0.0, 0.0),
            Vector4::new(0.0, 0.0, 1.0, 0.0),
            Vector4::new(0.0, 0.0, 0.0, lm),
        ];
        let mut paths = Vec::with_capacity(3);
        for b in basis {
            let mut path = self.sweep_costate(samples, n - 1, 0, b)?;
            path.reverse();
            path.push(b);
            paths.push(path);
        }
        let controls = Controls {
            chi: last.chi,
            pi: last.pi,
        };
        let h: Vec<f64> = basis
            .iter()
            .map(|b| self.pmp.hamiltonian(&last.state, &Costate(*b), controls))
            .collect();
        let s: Vec<f64> = paths
            .iter()
            .map(|p| self.pmp.switching_function(&samples[ks].state, &Costate(p[ks])))
            .collect();
        let m = nalgebra::Matrix2::new(h[0], h[1], s[0], s[1]);
        let rhs = nalgebra::Vector2::new(-alpha - h[2], -s[2]);
        let ab = m.lu().solve(&rhs).ok_or(Error::IllConditioned {
            det: m.determinant(),
            cond: f64::INFINITY,
        })?;
        Ok((0..n)
            .map(|i| paths[0][i] * ab[0] + paths[1][i] * ab[1] + paths[2][i])
            .collect())
    }

    /// Integrates the co-state ODE backward across the singular arc from the
    /// algebraic co-state at t2 and compares it with the algebraic solve at
    /// every interior sample. The switching function along the integrated
    /// co-state is differentiated twice with a stride of `stride` samples.
    ///
    /// Backward is the contractive direction: the airspeed mode is stable
    /// in forward time, so its adjoint grows forward.
    pub fn singular_arc_consistency(&self, traj: &Trajectory, stride: usize) -> Result<SingularConsistency> {
        let SingularLaw::Costate { alpha } = self.law else {
            return Err(Error::InvalidSchedule("consistency check needs α > 0".into()));
        };
        let samples = &traj.samples;
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].phase == Phase::Singular)
            .collect();
        if idx.len() < 2 * stride + 1 {
            return Err(Error::InvalidSchedule("singular arc too short for the stencil".into()));
        }
        let (i1, i2) = (idx[0], *idx.last().unwrap());
        let s2 = &samples[i2];
        let lam2 = self.pmp.solve_costates_on_singular(&s2.state, s2.chi, alpha)?.0;
        let mut ode = self.sweep_costate(samples, i2, i1, lam2)?;
        ode.reverse();
        ode.push(lam2);
        // ode[k] belongs to sample i1 + k
        let mut s_ode = Vec::with_capacity(ode.len());
        let mut max_costate_diff = 0.0f64;
        for (k, l) in ode.iter().enumerate() {
            let s = &samples[i1 + k];
            s_ode.push(self.pmp.switching_function(&s.state, &Costate(*l)));
            if k > 0 && i1 + k < i2 {
                let alg = self.pmp.solve_costates_on_singular(&s.state, s.chi, alpha)?.0;
                max_costate_diff = max_costate_diff.max((l - alg).amax());
            }
        }
        let tau: Vec<f64> = (i1..=i2).map(|i| samples[i].t / self.pmp.scaling.time).collect();
        let mut max_s2 = 0.0f64;
        for k in stride..s_ode.len() - stride {
            let (a, b, c) = (s_ode[k - stride], s_ode[k], s_ode[k + stride]);
            let h1 = tau[k] - tau[k - stride];
            let h2 = tau[k + stride] - tau[k];
            let s2 = 2.0 * (h1 * c - (h1 + h2) * b + h2 * a) / (h1 * h2 * (h1 + h2));
            max_s2 = max_s2.max(s2.abs());
        }
        Ok(SingularConsistency {
            max_costate_diff,
            max_s2,
            max_abs_s: s_ode.iter().fold(0.0, |m, v| m.max(v.abs())),
        })
    }
}

/// Result of [`ArcIntegrator::singular_arc_consistency`], scaled units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularConsistency {
    pub max_costate_diff: f64,
    pub max_s2: f64,
    pub max_abs_s: f64,
}

pub fn integrate_arcs(problem: &Problem, schedule: &ArcSchedule, options: &IntegratorOptions) -> Result<Trajectory> {
    ArcIntegrator::new(problem, options).integrate(schedule)
}

pub fn reconstruct_costates(problem: &Problem, traj: &Trajectory, options: &IntegratorOptions) -> Result<Trajectory> {
    ArcIntegrator::new(problem, options).reconstruct_costates(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::table1_problem;
    use crate::wind::WindConfig;

    fn nominal() -> ArcSchedule {
        ArcSchedule {
            t1: 90.0,
            t2: 6500.0,
            tf: 6580.0,
            chi0: 0.5,
        }
    }

    #[test]
    fn schedule_ordering_enforced() {
        let bad = ArcSchedule {
            t1: 5.0,
            t2: 4.0,
            tf: 10.0,
            chi0: 0.0,
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidSchedule(_))));
        let p = table1_problem();
        assert!(integrate_arcs(&p, &bad, &IntegratorOptions::default()).is_err());
    }

    #[test]
    fn samples_are_strictly_increasing_and_span_the_horizon() {
        let p = table1_problem();
        let traj = integrate_arcs(&p, &nominal(), &IntegratorOptions::default()).unwrap();
        assert_eq!(traj.samples.len(), 3 * 400 + 1);
        assert_eq!(traj.samples[0].t, 0.0);
        assert_eq!(traj.final_sample().t, 6580.0);
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert!(traj.samples.windows(2).all(|w| w[1].state[3] <= w[0].state[3]));
        let c = traj.cost();
        let last = traj.final_sample();
        assert_eq!(c, 0.4 * last.t + (0.4 - 1.0) * last.state[3]);
    }

    #[test]
    fn bang_bang_schedule_skips_singular_feedback() {
        let p = table1_problem();
        let s = ArcSchedule {
            t1: 100.0,
            t2: 100.0,
            tf: 180.0,
            chi0: 0.4,
        };
        let traj = integrate_arcs(&p, &s, &IntegratorOptions::default()).unwrap();
        assert!(traj.samples.iter().all(|s| s.phase != Phase::Singular));
        assert_eq!(traj.samples.len(), 801);
        assert_eq!(traj.clamp_count, 0);
    }

    #[test]
    fn constant_wind_keeps_heading() {
        let p = table1_problem()
            .with_wind(WindConfig::Constant { wx: 40.0, wy: -20.0 })
            .unwrap();
        let traj = integrate_arcs(&p, &nominal(), &IntegratorOptions::default()).unwrap();
        for s in &traj.samples {
            assert!((s.chi - 0.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn rk4_self_convergence_order() {
        let p = table1_problem();
        let sched = nominal();
        let terminal = |n: usize| {
            let opts = IntegratorOptions {
                steps_per_arc: n,
                ..Default::default()
            };
            let t = ArcIntegrator::new(&p, &opts).integrate_terminal(&sched).unwrap();
            let sc = opts.scaling;
            let xs = sc.to_scaled(&t.state);
            SVector::<f64, 5>::new(xs[0], xs[1], xs[2], xs[3], t.chi)
        };
        let (a, b, c) = (terminal(25), terminal(50), terminal(100));
        let order = ((a - b).norm() / (b - c).norm()).log2();
        assert!(order >= 3.8, "observed order {order}");
    }

    #[test]
    fn costates_satisfy_hamiltonian_and_heading_conditions() {
        let p = table1_problem();
        let opts = IntegratorOptions::default();
        let integ = ArcIntegrator::new(&p, &opts);
        let traj = integ
            .reconstruct_costates(&integ.integrate(&nominal()).unwrap())
            .unwrap();
        assert!(traj.has_costates());
        for s in &traj.samples {
            let h = s.diag.h.unwrap();
            assert!((h + 0.4).abs() < 1e-7, "H = {h} at t = {}", s.t);
            let l = s.costate.unwrap().0;
            let resid = (s.chi.sin() * l[0] - s.chi.cos() * l[1]).abs() / l[0].hypot(l[1]);
            assert!(resid < 1e-8);
        }
        let sing: Vec<_> = traj.samples.iter().filter(|s| s.phase == Phase::Singular).collect();
        assert!(sing.first().unwrap().diag.s.unwrap().abs() < 1e-8);
        assert!(sing.last().unwrap().diag.s.unwrap().abs() < 1e-8);
    }

    #[test]
    fn singular_arc_costate_ode_matches_algebraic_solve() {
        let p = table1_problem();
        let opts = IntegratorOptions::default();
        let integ = ArcIntegrator::new(&p, &opts);
        let traj = integ.integrate(&nominal()).unwrap();
        assert_eq!(traj.clamp_count, 0);
        let c = integ.singular_arc_consistency(&traj, 20).unwrap();
        assert!(c.max_costate_diff < 1e-6, "{c:?}");
        assert!(c.max_s2 < 1e-6, "{c:?}");
    }
}
