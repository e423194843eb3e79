//! Pontryagin machinery: Hamiltonian, co-state dynamics, switching function,
//! the Lie-bracket fields A, B, D, the algebraic co-state solve on a singular
//! arc and the singular throttle feedbacks.
//!
//! Everything here runs on nondimensional variables: positions over 1e6 m,
//! speed over 1e2 m/s, mass over 1e4 kg and time over 1e3 s. The cost is
//! divided by the time scale so that the scaled Hamiltonian and switching
//! function coincide numerically with their SI counterparts; in particular
//! H = −α on an optimal trajectory in either set of units. Scaled co-states
//! relate to SI ones through λ_SI = λ̃ · T / s.
//!
//! First-level Jacobians are analytic. Second-level derivatives (∂A/∂X,
//! ∂A/∂χ and ∇det M̄) use central differences.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Controls, CruiseModel};
use crate::error::{Error, Result};

/// Reference magnitudes used to nondimensionalise the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub length: f64,
    pub speed: f64,
    pub mass: f64,
    pub time: f64,
}

impl Default for Scaling {
    fn default() -> Self {
        Self {
            length: 1e6,
            speed: 1e2,
            mass: 1e4,
            time: 1e3,
        }
    }
}

impl Scaling {
    #[inline]
    pub fn state_scale(&self) -> Vector4<f64> {
        Vector4::new(self.length, self.length, self.speed, self.mass)
    }

    #[inline]
    pub fn to_scaled(&self, x: &Vector4<f64>) -> Vector4<f64> {
        x.component_div(&self.state_scale())
    }

    #[inline]
    pub fn to_si(&self, xs: &Vector4<f64>) -> Vector4<f64> {
        xs.component_mul(&self.state_scale())
    }

    /// Factor T/s mapping an SI vector field onto the scaled one.
    #[inline]
    fn field_factor(&self) -> Vector4<f64> {
        self.state_scale().map(|s| self.time / s)
    }
}

/// Scaled co-state (λ̃_x, λ̃_y, λ̃_v, λ̃_m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Costate(pub Vector4<f64>);

impl Costate {
    pub fn zero() -> Self {
        Costate(Vector4::zeros())
    }

    /// Co-state in SI units (per m, per m, per m/s, per kg).
    pub fn to_si(&self, scaling: &Scaling) -> Vector4<f64> {
        self.0.component_mul(&scaling.field_factor())
    }

    pub fn from_si(lambda: &Vector4<f64>, scaling: &Scaling) -> Self {
        Costate(lambda.component_div(&scaling.field_factor()))
    }
}

/// Thresholds and step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmpOptions {
    /// Minimum |det| of the row-normalised singular-arc matrix.
    pub eps_det: f64,
    /// Minimum |<λ, D>| (scaled) for the singular throttle.
    pub eps_den: f64,
    /// Relative central-difference step on scaled coordinates.
    pub fd_step: f64,
    /// Bound on the scaled residuals of the algebraic co-state solve.
    pub residual_tol: f64,
}

impl Default for PmpOptions {
    fn default() -> Self {
        Self {
            eps_det: 1e-10,
            eps_den: 1e-12,
            fd_step: 1e-6,
            residual_tol: 1e-9,
        }
    }
}

/// Quantities entering the singular-arc conditions, all scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularContext {
    pub q: Vector4<f64>,
    pub p: Vector4<f64>,
    pub a: Vector4<f64>,
    pub b: Vector4<f64>,
    pub d: Vector4<f64>,
    pub da_dchi: Vector4<f64>,
    /// Rows: P, A, Q, (tanχ, −1, 0, 0).
    pub m_bar: Matrix4<f64>,
    /// (0, 0, −α, 0).
    pub r: Vector4<f64>,
    pub alpha: f64,
    /// Scaled heading rate dχ/dτ.
    pub chi_rate: f64,
}

/// Singular throttle together with the co-state it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularFeedback {
    /// Unclamped throttle.
    pub pi: f64,
    pub costate: Costate,
    /// Legendre–Clebsch quantity −<λ, D>.
    pub lc: f64,
    /// det M̄ (raw, scaled units).
    pub det: f64,
}

/// Pontryagin evaluator bound to a cruise model. States passed in are SI;
/// co-states and vector fields returned are scaled.
#[derive(Debug, Clone)]
pub struct Pontryagin<'a> {
    pub model: &'a CruiseModel,
    pub scaling: Scaling,
    pub options: PmpOptions,
}

impl<'a> Pontryagin<'a> {
    pub fn new(model: &'a CruiseModel) -> Self {
        Self::with_options(model, Scaling::default(), PmpOptions::default())
    }

    pub fn with_options(model: &'a CruiseModel, scaling: Scaling, options: PmpOptions) -> Self {
        Self {
            model,
            scaling,
            options,
        }
    }

    #[inline]
    pub fn q_scaled(&self, x: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        self.model.eval_q(x, chi).component_mul(&self.scaling.field_factor())
    }

    #[inline]
    pub fn p_scaled(&self, x: &Vector4<f64>) -> Vector4<f64> {
        self.model.eval_p(x).component_mul(&self.scaling.field_factor())
    }

    #[inline]
    fn scale_jacobian(&self, j: Matrix4<f64>) -> Matrix4<f64> {
        let rows = self.scaling.field_factor();
        let cols = self.scaling.state_scale();
        Matrix4::from_fn(|i, k| j[(i, k)] * rows[i] * cols[k])
    }

    #[inline]
    pub fn jacobian_q_scaled(&self, x: &Vector4<f64>, chi: f64) -> Matrix4<f64> {
        self.scale_jacobian(self.model.jacobian_q(x, chi))
    }

    #[inline]
    pub fn jacobian_p_scaled(&self, x: &Vector4<f64>) -> Matrix4<f64> {
        self.scale_jacobian(self.model.jacobian_p(x))
    }

    #[inline]
    pub fn dq_dchi_scaled(&self, x: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        self.model.dq_dchi(x, chi).component_mul(&self.scaling.field_factor())
    }

    /// dχ/dτ in scaled time.
    #[inline]
    pub fn heading_rate_scaled(&self, x: &Vector4<f64>, chi: f64) -> f64 {
        self.scaling.time * self.model.heading_rate(x, chi)
    }

    /// H = <λ, F(X, U)> on an interior arc.
    pub fn hamiltonian(&self, x: &Vector4<f64>, costate: &Costate, controls: Controls) -> f64 {
        let f = self.q_scaled(x, controls.chi) + self.p_scaled(x) * controls.pi;
        costate.0.dot(&f)
    }

    /// dλ̃/dτ = −(∂Q/∂X + Π ∂P/∂X)ᵀ λ̃.
    #[inline]
    pub fn costate_rhs(&self, x: &Vector4<f64>, costate: &Costate, controls: Controls) -> Vector4<f64> {
        let j = self.jacobian_q_scaled(x, controls.chi) + self.jacobian_p_scaled(x) * controls.pi;
        -(j.transpose() * costate.0)
    }

    /// S = <λ, P>.
    #[inline]
    pub fn switching_function(&self, x: &Vector4<f64>, costate: &Costate) -> f64 {
        costate.0.dot(&self.p_scaled(x))
    }

    /// A = (∂P/∂X) Q − (∂Q/∂X) P in SI units.
    pub fn lie_a(&self, x: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        let m = self.model;
        m.jacobian_p(x) * m.eval_q(x, chi) - m.jacobian_q(x, chi) * m.eval_p(x)
    }

    /// A in scaled units, as a function of the scaled state.
    #[inline]
    fn lie_a_at_scaled(&self, xs: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        let x = self.scaling.to_si(xs);
        self.lie_a(&x, chi).component_mul(&self.scaling.field_factor()) * self.scaling.time
    }

    #[inline]
    pub fn lie_a_scaled(&self, x: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        self.lie_a_at_scaled(&self.scaling.to_scaled(x), chi)
    }

    fn fd_step_for(&self, value: f64) -> f64 {
        self.options.fd_step * value.abs().max(1.0)
    }

    /// ∂Ã/∂X̃ by central differences with the default step.
    pub fn da_dx_scaled(&self, x: &Vector4<f64>, chi: f64) -> Matrix4<f64> {
        self.da_dx_scaled_with_step(x, chi, self.options.fd_step)
    }

    pub fn da_dx_scaled_with_step(&self, x: &Vector4<f64>, chi: f64, rel_step: f64) -> Matrix4<f64> {
        let xs = self.scaling.to_scaled(x);
        let mut j = Matrix4::zeros();
        for k in 0..4 {
            let h = rel_step * xs[k].abs().max(1.0);
            let mut plus = xs;
            let mut minus = xs;
            plus[k] += h;
            minus[k] -= h;
            let col = (self.lie_a_at_scaled(&plus, chi) - self.lie_a_at_scaled(&minus, chi)) / (2.0 * h);
            j.set_column(k, &col);
        }
        j
    }

    pub fn da_dchi_scaled(&self, x: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        let xs = self.scaling.to_scaled(x);
        let h = self.fd_step_for(chi);
        (self.lie_a_at_scaled(&xs, chi + h) - self.lie_a_at_scaled(&xs, chi - h)) / (2.0 * h)
    }

    /// B = (∂A/∂X) Q − (∂Q/∂X) A and D = (∂A/∂X) P − (∂P/∂X) A, scaled.
    pub fn lie_b_d(&self, x: &Vector4<f64>, chi: f64) -> (Vector4<f64>, Vector4<f64>) {
        self.lie_b_d_with_step(x, chi, self.options.fd_step)
    }

    pub fn lie_b_d_with_step(&self, x: &Vector4<f64>, chi: f64, rel_step: f64) -> (Vector4<f64>, Vector4<f64>) {
        let da = self.da_dx_scaled_with_step(x, chi, rel_step);
        let a = self.lie_a_scaled(x, chi);
        let q = self.q_scaled(x, chi);
        let p = self.p_scaled(x);
        let b = da * q - self.jacobian_q_scaled(x, chi) * a;
        let d = da * p - self.jacobian_p_scaled(x) * a;
        (b, d)
    }

    /// M̄ with rows P, A, Q and the heading row (tanχ, −1, 0, 0).
    pub fn singular_matrix(&self, x: &Vector4<f64>, chi: f64) -> Matrix4<f64> {
        let p = self.p_scaled(x);
        let a = self.lie_a_scaled(x, chi);
        let q = self.q_scaled(x, chi);
        matrix_from_rows(&p, &a, &q, chi)
    }

    pub fn det_m(&self, x: &Vector4<f64>, chi: f64) -> f64 {
        self.singular_matrix(x, chi).determinant()
    }

    pub fn singular_context(&self, x: &Vector4<f64>, chi: f64, alpha: f64) -> SingularContext {
        let q = self.q_scaled(x, chi);
        let p = self.p_scaled(x);
        let a = self.lie_a_scaled(x, chi);
        let (b, d) = self.lie_b_d(x, chi);
        SingularContext {
            q,
            p,
            a,
            b,
            d,
            da_dchi: self.da_dchi_scaled(x, chi),
            m_bar: matrix_from_rows(&p, &a, &q, chi),
            r: Vector4::new(0.0, 0.0, -alpha, 0.0),
            alpha,
            chi_rate: self.heading_rate_scaled(x, chi),
        }
    }

    /// Solves S = 0, S⁽¹⁾ = 0, H = −α, ∂H/∂χ = 0 for the co-state.
    pub fn solve_costates_on_singular(&self, x: &Vector4<f64>, chi: f64, alpha: f64) -> Result<Costate> {
        let m_bar = self.singular_matrix(x, chi);
        solve_singular_system(&m_bar, alpha, &self.options)
    }

    /// Singular throttle from S⁽²⁾ = 0 with the algebraically solved
    /// co-state. The result is not clamped.
    pub fn singular_throttle(&self, x: &Vector4<f64>, chi: f64, alpha: f64) -> Result<SingularFeedback> {
        let ctx = self.singular_context(x, chi, alpha);
        let costate = solve_singular_system(&ctx.m_bar, alpha, &self.options)?;
        let lam = &costate.0;
        let den = lam.dot(&ctx.d);
        if !(den.abs() > self.options.eps_den) {
            return Err(Error::SingularDenominator { value: den });
        }
        let num = lam.dot(&ctx.b) + lam.dot(&ctx.da_dchi) * ctx.chi_rate;
        Ok(SingularFeedback {
            pi: -num / den,
            costate,
            lc: -den,
            det: ctx.m_bar.determinant(),
        })
    }

    /// ∇_X̃ det M̄ by central differences.
    pub fn det_gradient_scaled(&self, x: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        let xs = self.scaling.to_scaled(x);
        let mut g = Vector4::zeros();
        for k in 0..4 {
            let h = self.fd_step_for(xs[k]);
            let mut plus = xs;
            let mut minus = xs;
            plus[k] += h;
            minus[k] -= h;
            let dp = self.det_m(&self.scaling.to_si(&plus), chi);
            let dm = self.det_m(&self.scaling.to_si(&minus), chi);
            g[k] = (dp - dm) / (2.0 * h);
        }
        g
    }

    /// Throttle that keeps det M̄ constant along the flow; for α = 0 the
    /// singular arc lies on det M̄ = 0. The heading moves along the arc, so
    /// the transport condition includes ∂det/∂χ · dχ/dτ.
    pub fn singular_throttle_alpha0(&self, x: &Vector4<f64>, chi: f64) -> Result<f64> {
        let grad = self.det_gradient_scaled(x, chi);
        let h = self.fd_step_for(chi);
        let d_chi = (self.det_m(x, chi + h) - self.det_m(x, chi - h)) / (2.0 * h);
        let q = self.q_scaled(x, chi);
        let p = self.p_scaled(x);
        let den = grad.dot(&p);
        if !(den.abs() > self.options.eps_den * grad.norm() * p.norm()) {
            return Err(Error::DegenerateArc { value: den });
        }
        let num = grad.dot(&q) + d_chi * self.heading_rate_scaled(x, chi);
        Ok(-num / den)
    }

    /// Unit null vector of M̄ (smallest right singular vector), oriented so
    /// that λ̃_m < 0. Used to seed co-states when α = 0.
    pub fn null_costate(&self, x: &Vector4<f64>, chi: f64) -> Costate {
        let svd = self.singular_matrix(x, chi).svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut n: Vector4<f64> = v_t.row(imin).transpose();
        if n[3] > 0.0 {
            n = -n;
        }
        Costate(n)
    }
}

fn matrix_from_rows(p: &Vector4<f64>, a: &Vector4<f64>, q: &Vector4<f64>, chi: f64) -> Matrix4<f64> {
    Matrix4::new(
        p[0],
        p[1],
        p[2],
        p[3], //
        a[0],
        a[1],
        a[2],
        a[3], //
        q[0],
        q[1],
        q[2],
        q[3], //
        chi.tan(),
        -1.0,
        0.0,
        0.0,
    )
}

fn row_normalised(m: &Matrix4<f64>) -> Matrix4<f64> {
    let mut scaled = *m;
    for mut row in scaled.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    scaled
}

/// 2-norm condition number of the row-normalised matrix.
fn condition_estimate(m: &Matrix4<f64>) -> f64 {
    let sv = row_normalised(m).singular_values();
    sv.max() / sv.min()
}

fn solve_singular_system(m_bar: &Matrix4<f64>, alpha: f64, options: &PmpOptions) -> Result<Costate> {
    let det = row_normalised(m_bar).determinant();
    let ill = || Error::IllConditioned {
        det,
        cond: condition_estimate(m_bar),
    };
    if !(det.abs() > options.eps_det) {
        return Err(ill());
    }
    let r = Vector4::new(0.0, 0.0, -alpha, 0.0);
    let lam = m_bar.lu().solve(&r).ok_or_else(ill)?;
    let res = m_bar * lam - r;
    let lam_norm = lam.norm();
    for (i, row) in m_bar.row_iter().enumerate() {
        let scale = (row.norm() * lam_norm).max(1.0);
        if !(res[i].abs() <= options.residual_tol * scale) {
            return Err(ill());
        }
    }
    Ok(Costate(lam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::table1_model;
    use crate::wind::WindField;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample_state() -> (Vector4<f64>, f64) {
        (Vector4::new(4.0e5, 1.8e5, 245.0, 57_500.0), 0.41)
    }

    fn adjugate(m: &Matrix4<f64>) -> Matrix4<f64> {
        let mut adj = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let minor = m.remove_row(i).remove_column(j);
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                adj[(j, i)] = sign * minor.determinant();
            }
        }
        adj
    }

    #[test]
    fn hamiltonian_basic_properties() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        assert_eq!(pmp.hamiltonian(&x, &Costate::zero(), Controls { chi, pi: 0.5 }), 0.0);
        assert_eq!(
            pmp.costate_rhs(&x, &Costate::zero(), Controls { chi, pi: 0.5 }),
            Vector4::zeros()
        );
        assert_eq!(pmp.switching_function(&x, &Costate::zero()), 0.0);

        // affine in Π with slope S
        let lam = Costate(Vector4::new(-0.9, -0.3, -0.05, -6.0));
        let h0 = pmp.hamiltonian(&x, &lam, Controls { chi, pi: 0.0 });
        let h1 = pmp.hamiltonian(&x, &lam, Controls { chi, pi: 1.0 });
        assert_relative_eq!(h1 - h0, pmp.switching_function(&x, &lam), max_relative = 1e-12);
    }

    #[test]
    fn switching_function_root() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, _) = sample_state();
        // λ_v = m C_s(v) λ_m in SI zeroes S
        let cs = crate::atmosphere::fuel_flow_coeff(&model.aircraft, x[2]);
        let lam_m = -0.6;
        let si = Vector4::new(1e-3, 2e-4, x[3] * cs * lam_m, lam_m);
        let lam = Costate::from_si(&si, &pmp.scaling);
        assert!(pmp.switching_function(&x, &lam).abs() < 1e-13);
    }

    #[test]
    fn costate_rhs_constant_wind_keeps_position_costates() {
        let mut model = table1_model();
        model.wind = WindField::Constant { wx: 40.0, wy: -20.0 };
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let lam = Costate(Vector4::new(-0.9, -0.3, -0.05, -6.0));
        let rhs = pmp.costate_rhs(&x, &lam, Controls { chi, pi: 0.7 });
        assert_eq!((rhs[0], rhs[1]), (0.0, 0.0));
    }

    #[test]
    fn costate_rhs_position_rows_match_wind_gradient_form() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let lam = Costate(Vector4::new(-0.9, -0.3, -0.05, -6.0));
        let rhs = pmp.costate_rhs(&x, &lam, Controls { chi, pi: 0.3 });
        let g = model.wind.wind_gradients(x[0], x[1]);
        let t = pmp.scaling.time;
        assert_relative_eq!(
            rhs[0],
            -t * (lam.0[0] * g.dwx_dx + lam.0[1] * g.dwy_dx),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            rhs[1],
            -t * (lam.0[0] * g.dwx_dy + lam.0[1] * g.dwy_dy),
            max_relative = 1e-12
        );
    }

    #[test]
    fn lie_a_position_components() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let a = pmp.lie_a(&x, chi);
        let t = model.max_thrust();
        assert_relative_eq!(a[0], -t * chi.cos() / x[3], max_relative = 1e-14);
        assert_relative_eq!(a[1], -t * chi.sin() / x[3], max_relative = 1e-14);
    }

    #[test]
    fn lie_b_position_components_in_constant_wind() {
        // A_x depends on m only and Q_m = 0, so B_x = −cosχ A_v and
        // B_y = −sinχ A_v with A_v = D_v T/m² − C_s T (D_m/m − D/m²)
        let mut model = table1_model();
        model.wind = WindField::Constant { wx: 40.0, wy: -20.0 };
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let (b, _) = pmp.lie_b_d(&x, chi);
        let sc = pmp.scaling;
        let factor = sc.time * sc.time * sc.time / sc.length;
        let (v, m) = (x[2], x[3]);
        let d = crate::atmosphere::drag(&model.aircraft, &model.atmosphere, m, v, model.h).unwrap();
        let cs = crate::atmosphere::fuel_flow_coeff(&model.aircraft, v);
        let t = model.max_thrust();
        let a_v = d.d_dv * t / (m * m) - cs * t * (d.d_dm / m - d.value / (m * m));
        assert_relative_eq!(b[0] / factor, -chi.cos() * a_v, max_relative = 1e-7);
        assert_relative_eq!(b[1] / factor, -chi.sin() * a_v, max_relative = 1e-7);
    }

    #[test]
    fn lie_b_d_richardson_ratio() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        // fine reference step small enough to sit below the truncation error
        // of the two coarse steps but above roundoff
        let (b_ref, d_ref) = pmp.lie_b_d_with_step(&x, chi, 2e-4);
        let (b1, d1) = pmp.lie_b_d_with_step(&x, chi, 8e-3);
        let (b2, d2) = pmp.lie_b_d_with_step(&x, chi, 4e-3);
        let e1 = (b1 - b_ref).norm() + (d1 - d_ref).norm();
        let e2 = (b2 - b_ref).norm() + (d2 - d_ref).norm();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "Richardson ratio {ratio}");
        // default step agrees with the reference to ~1e-8 relative
        let (b, d) = pmp.lie_b_d(&x, chi);
        assert!((b - b_ref).norm() <= 1e-6 * b_ref.norm());
        assert!((d - d_ref).norm() <= 1e-6 * d_ref.norm());
    }

    #[test]
    fn singular_costates_satisfy_defining_equations() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let alpha = 0.4;
        let lam = pmp.solve_costates_on_singular(&x, chi, alpha).unwrap();
        let s = pmp.switching_function(&x, &lam);
        let s1 = lam.0.dot(&pmp.lie_a_scaled(&x, chi));
        let h = lam.0.dot(&pmp.q_scaled(&x, chi));
        assert!(s.abs() < 1e-9 && s1.abs() < 1e-9);
        assert!((h + alpha).abs() < 1e-9);
        assert!((chi.tan() - lam.0[1] / lam.0[0]).abs() < 1e-9);
        // Π-independence of H − Π S: H on the arc is −α for every throttle
        for pi in [0.0, 0.5, 1.0] {
            assert!((pmp.hamiltonian(&x, &lam, Controls { chi, pi }) + alpha).abs() < 1e-9);
        }
    }

    #[test]
    fn lu_solution_matches_adjugate_form() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let alpha = 0.3;
        let m = pmp.singular_matrix(&x, chi);
        let r = Vector4::new(0.0, 0.0, -alpha, 0.0);
        let oracle = adjugate(&m) * r / m.determinant();
        let lam = pmp.solve_costates_on_singular(&x, chi, alpha).unwrap();
        assert_relative_eq!(lam.0, oracle, max_relative = 1e-10);
    }

    #[test]
    fn near_singular_system_is_rejected() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let mut m = pmp.singular_matrix(&x, chi);
        let q_row = m.row(2).into_owned();
        m.set_row(3, &q_row);
        let err = solve_singular_system(&m, 0.4, &PmpOptions::default()).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
    }

    #[test]
    fn feedback_is_independent_of_alpha_scale() {
        let model = table1_model();
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let f1 = pmp.singular_throttle(&x, chi, 0.2).unwrap();
        let f2 = pmp.singular_throttle(&x, chi, 0.6).unwrap();
        assert_relative_eq!(f2.costate.0, f1.costate.0 * 3.0, max_relative = 1e-10);
        assert_relative_eq!(f1.pi, f2.pi, max_relative = 1e-10);
    }

    #[test]
    fn constant_wind_feedback_reduces_to_b_over_d() {
        let mut model = table1_model();
        model.wind = WindField::Constant { wx: 40.0, wy: -20.0 };
        let pmp = Pontryagin::new(&model);
        let (x, chi) = sample_state();
        let ctx = pmp.singular_context(&x, chi, 0.4);
        assert_eq!(ctx.chi_rate, 0.0);
        let fb = pmp.singular_throttle(&x, chi, 0.4).unwrap();
        let lam = fb.costate.0;
        assert_relative_eq!(fb.pi, -lam.dot(&ctx.b) / lam.dot(&ctx.d), max_relative = 1e-12);
    }

    #[test]
    fn det_transport_throttle_matches_regular_feedback_on_null_surface() {
        // On det M̄ = 0 the co-state is the null vector; the regular feedback
        // evaluated with a vanishing α approaches the transport throttle.
        let mut model = table1_model();
        model.wind = WindField::Constant { wx: 40.0, wy: -20.0 };
        let pmp = Pontryagin::new(&model);
        let (mut x, chi) = sample_state();
        // bisect on v for det M̄ = 0
        let f = |v: f64, x: &mut Vector4<f64>| {
            x[2] = v;
            pmp.det_m(x, chi)
        };
        let (mut lo, mut hi) = (150.0, 320.0);
        let flo = f(lo, &mut x);
        assert!(flo * f(hi, &mut x) < 0.0, "no det sign change");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid, &mut x) * flo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x[2] = 0.5 * (lo + hi) + 1e-6;
        let pi0 = pmp.singular_throttle_alpha0(&x, chi).unwrap();
        let null = pmp.null_costate(&x, chi);
        let ctx = pmp.singular_context(&x, chi, 0.0);
        let pi_null = -null.0.dot(&ctx.b) / null.0.dot(&ctx.d);
        assert!((pi0 - pi_null).abs() < 1e-4 * pi0.abs().max(1.0), "{pi0} vs {pi_null}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn costate_rhs_and_lie_a_match_finite_differences(
            x0 in -1e5f64..1.6e6,
            y0 in -1e5f64..8e5,
            v in 170.0f64..290.0,
            m in 50_000.0f64..65_000.0,
            chi in -1.2f64..1.2,
            pi in 0.0f64..1.0,
            l in proptest::array::uniform4(-1.0f64..1.0),
        ) {
            let model = table1_model();
            let pmp = Pontryagin::new(&model);
            let x = Vector4::new(x0, y0, v, m);
            let lam = Costate(Vector4::from(l));
            let controls = Controls { chi, pi };
            // oracle: −(FD Jacobian of the scaled field)ᵀ λ
            let sc = pmp.scaling;
            let xs = sc.to_scaled(&x);
            let field = |z: &Vector4<f64>| {
                let si = sc.to_si(z);
                pmp.q_scaled(&si, chi) + pmp.p_scaled(&si) * pi
            };
            let mut jfd = Matrix4::zeros();
            let qfd = |z: &Vector4<f64>| pmp.q_scaled(&sc.to_si(z), chi);
            let pfd = |z: &Vector4<f64>| pmp.p_scaled(&sc.to_si(z));
            let mut jq = Matrix4::zeros();
            let mut jp = Matrix4::zeros();
            for k in 0..4 {
                let h = 1e-6 * xs[k].abs().max(1.0);
                let mut a = xs;
                let mut b = xs;
                a[k] += h;
                b[k] -= h;
                jfd.set_column(k, &((field(&a) - field(&b)) / (2.0 * h)));
                jq.set_column(k, &((qfd(&a) - qfd(&b)) / (2.0 * h)));
                jp.set_column(k, &((pfd(&a) - pfd(&b)) / (2.0 * h)));
            }
            let oracle = -(jfd.transpose() * lam.0);
            let rhs = pmp.costate_rhs(&x, &lam, controls);
            let scale = jfd.abs().max() * lam.0.abs().max();
            prop_assert!((rhs - oracle).amax() <= 1e-6 * scale);

            let a_fd = jp * pmp.q_scaled(&x, chi) - jq * pmp.p_scaled(&x);
            let a = pmp.lie_a_scaled(&x, chi);
            prop_assert!((a - a_fd).amax() <= 1e-6 * a.amax());
        }

        #[test]
        fn first_derivative_of_s_is_throttle_independent(
            pi in 0.0f64..1.0,
            l in proptest::array::uniform4(-1.0f64..1.0),
        ) {
            // d/dτ <λ, P> along (F, λ̇) equals <λ, A> for any throttle
            let model = table1_model();
            let pmp = Pontryagin::new(&model);
            let (x, chi) = sample_state();
            let lam = Costate(Vector4::from(l));
            let controls = Controls { chi, pi };
            let sc = pmp.scaling;
            let f_scaled = pmp.q_scaled(&x, chi) + pmp.p_scaled(&x) * pi;
            let lam_dot = pmp.costate_rhs(&x, &lam, controls);
            let h = 1e-5;
            let s_at = |eps: f64| {
                let xs = sc.to_scaled(&x) + f_scaled * eps;
                let l2 = Costate(lam.0 + lam_dot * eps);
                pmp.switching_function(&sc.to_si(&xs), &l2)
            };
            let ds = (s_at(h) - s_at(-h)) / (2.0 * h);
            let s1 = lam.0.dot(&pmp.lie_a_scaled(&x, chi));
            prop_assert!((ds - s1).abs() <= 1e-5 * s1.abs().max(lam.0.norm()));
        }
    }
}
