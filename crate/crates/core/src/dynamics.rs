//! Point-mass cruise dynamics in control-affine form F = Q(X, χ) + Π P(X).

use nalgebra::{Matrix4, Vector4};

use crate::atmosphere::{
    air_density, fuel_flow_coeff, fuel_flow_coeff_dv, max_thrust, AircraftModel, Atmosphere, DragPolar,
};
use crate::error::{Error, Result};
use crate::wind::{WindField, WindGradient};

/// Planar cruise state (x, y in m, v in m/s, m in kg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub m: f64,
}

impl State {
    pub fn new(x: f64, y: f64, v: f64, m: f64) -> Self {
        Self { x, y, v, m }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.v, self.m)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// State extended with the heading, which is integrated as a fifth state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub base: State,
    /// Heading (rad), unwrapped.
    pub chi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    /// Heading (rad).
    pub chi: f64,
    /// Throttle setting.
    pub pi: f64,
}

/// Aircraft, atmosphere and wind at a fixed cruise altitude. Altitude
/// dependent quantities (density, max thrust) are evaluated once.
#[derive(Debug, Clone)]
pub struct CruiseModel {
    pub aircraft: AircraftModel,
    pub atmosphere: Atmosphere,
    pub wind: WindField,
    /// Cruise altitude (m).
    pub h: f64,
    rho: f64,
    t_max: f64,
    polar: DragPolar,
}

impl CruiseModel {
    pub fn new(aircraft: AircraftModel, atmosphere: Atmosphere, wind: WindField, h: f64) -> Result<Self> {
        aircraft.validate()?;
        atmosphere.validate()?;
        let rho = air_density(&atmosphere, h)?;
        let t_max = max_thrust(&aircraft, h)?;
        if t_max <= 0.0 {
            return Err(Error::ModelInconsistency(format!("no thrust available at h = {h} m")));
        }
        let polar = DragPolar::new(&aircraft, rho, atmosphere.g);
        Ok(Self {
            aircraft,
            atmosphere,
            wind,
            h,
            rho,
            t_max,
            polar,
        })
    }

    pub fn density(&self) -> f64 {
        self.rho
    }

    pub fn max_thrust(&self) -> f64 {
        self.t_max
    }

    /// Checks the state invariants: finite, v > 0, m > m_min.
    pub fn check_state(&self, s: &Vector4<f64>) -> Result<()> {
        if !s.iter().all(|c| c.is_finite()) {
            return Err(Error::Domain(format!("non-finite state {s:?}")));
        }
        if s[2] <= 0.0 {
            return Err(Error::Domain(format!("airspeed {} m/s is not positive", s[2])));
        }
        if s[3] <= self.aircraft.m_min {
            return Err(Error::Domain(format!(
                "mass {} kg is below the plausibility bound {} kg",
                s[3], self.aircraft.m_min
            )));
        }
        Ok(())
    }

    /// Drift field Q = (v cosχ + w_x, v sinχ + w_y, −D/m, 0).
    #[inline]
    pub fn eval_q(&self, s: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        let (wx, wy) = self.wind.wind_at(s[0], s[1]);
        let d = self.polar.eval(s[3], s[2]);
        let (sin, cos) = chi.sin_cos();
        Vector4::new(s[2] * cos + wx, s[2] * sin + wy, -d.value / s[3], 0.0)
    }

    /// Control field P = (0, 0, T_max/m, −C_s(v) T_max).
    #[inline]
    pub fn eval_p(&self, s: &Vector4<f64>) -> Vector4<f64> {
        Vector4::new(
            0.0,
            0.0,
            self.t_max / s[3],
            -fuel_flow_coeff(&self.aircraft, s[2]) * self.t_max,
        )
    }

    #[inline]
    pub fn eval_f(&self, s: &Vector4<f64>, controls: Controls) -> Vector4<f64> {
        self.eval_q(s, controls.chi) + self.eval_p(s) * controls.pi
    }

    /// ∂Q/∂X.
    #[inline]
    pub fn jacobian_q(&self, s: &Vector4<f64>, chi: f64) -> Matrix4<f64> {
        let g = self.wind.wind_gradients(s[0], s[1]);
        let d = self.polar.eval(s[3], s[2]);
        let m = s[3];
        let (sin, cos) = chi.sin_cos();
        Matrix4::new(
            g.dwx_dx,
            g.dwx_dy,
            cos,
            0.0, //
            g.dwy_dx,
            g.dwy_dy,
            sin,
            0.0, //
            0.0,
            0.0,
            -d.d_dv / m,
            -d.d_dm / m + d.value / (m * m), //
            0.0,
            0.0,
            0.0,
            0.0,
        )
    }

    /// ∂P/∂X; rows for x and y are identically zero.
    #[inline]
    pub fn jacobian_p(&self, s: &Vector4<f64>) -> Matrix4<f64> {
        let m = s[3];
        let mut j = Matrix4::zeros();
        j[(2, 3)] = -self.t_max / (m * m);
        j[(3, 2)] = -fuel_flow_coeff_dv(&self.aircraft) * self.t_max;
        j
    }

    /// ∂Q/∂χ = (−v sinχ, v cosχ, 0, 0).
    #[inline]
    pub fn dq_dchi(&self, s: &Vector4<f64>, chi: f64) -> Vector4<f64> {
        let (sin, cos) = chi.sin_cos();
        Vector4::new(-s[2] * sin, s[2] * cos, 0.0, 0.0)
    }

    /// Optimal heading rate dχ/dt at position (x, y).
    #[inline]
    pub fn heading_rate(&self, s: &Vector4<f64>, chi: f64) -> f64 {
        zermelo_rhs(chi, &self.wind.wind_gradients(s[0], s[1]))
    }
}

/// Zermelo heading rate, in the pole-free form
/// dχ/dt = sin²χ ∂w_y/∂x + sinχ cosχ (∂w_x/∂x − ∂w_y/∂y) − cos²χ ∂w_x/∂y.
#[inline]
pub fn zermelo_rhs(chi: f64, g: &WindGradient) -> f64 {
    let (sin, cos) = chi.sin_cos();
    sin * sin * g.dwy_dx + sin * cos * (g.dwx_dx - g.dwy_dy) - cos * cos * g.dwx_dy
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::atmosphere::tests::a320;
    use crate::wind::tests::table1_wind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) fn table1_model() -> CruiseModel {
        CruiseModel::new(a320(), Atmosphere::default(), table1_wind(), 10_000.0).unwrap()
    }

    fn calm_model() -> CruiseModel {
        CruiseModel::new(
            a320(),
            Atmosphere::default(),
            WindField::Constant { wx: 0.0, wy: 0.0 },
            10_000.0,
        )
        .unwrap()
    }

    fn zermelo_tan_form(chi: f64, g: &WindGradient) -> f64 {
        let t = chi.tan();
        (-g.dwx_dy + (g.dwx_dx - g.dwy_dy) * t + g.dwy_dx * t * t) / (1.0 + t * t)
    }

    fn fd_jacobian<F: Fn(&Vector4<f64>) -> Vector4<f64>>(f: F, s: &Vector4<f64>) -> Matrix4<f64> {
        // steps relative to the reference magnitudes of x, y, v, m
        let reference = [1e6, 1e6, 1e2, 1e4];
        let mut j = Matrix4::zeros();
        for k in 0..4 {
            let h = 1e-6 * s[k].abs().max(reference[k]);
            let mut sp = *s;
            let mut sm = *s;
            sp[k] += h;
            sm[k] -= h;
            j.set_column(k, &((f(&sp) - f(&sm)) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn drift_field_structure() {
        let calm = calm_model();
        let s = Vector4::new(1e5, 2e5, 210.0, 58_000.0);
        let q = calm.eval_q(&s, 0.0);
        assert_eq!(q[0], 210.0);
        assert!(q[1].abs() < 1e-12);
        assert!(q[2] < 0.0);
        assert_eq!(q[3], 0.0);

        let windy = CruiseModel {
            wind: WindField::Constant { wx: 40.0, wy: -20.0 },
            ..calm.clone()
        };
        let q = windy.eval_q(&s, FRAC_PI_2);
        assert_relative_eq!(q[0], 40.0, epsilon = 1e-12);
        assert_relative_eq!(q[1], 190.0, epsilon = 1e-12);
    }

    #[test]
    fn control_field_structure() {
        let m = table1_model();
        let s = Vector4::new(0.0, 0.0, 200.0, 59_000.0);
        let p = m.eval_p(&s);
        assert_eq!((p[0], p[1]), (0.0, 0.0));
        let half = Vector4::new(0.0, 0.0, 200.0, 29_500.0);
        let ph = m.eval_p(&half);
        assert_relative_eq!(ph[2], 2.0 * p[2], max_relative = 1e-15);
        assert_eq!(ph[3], p[3]);
        // golden values: T = 69222.2222 N, C_s(200) = 1.9e-5 * 1.25
        assert_relative_eq!(p[2], 69_222.222_222_222_22 / 59_000.0, max_relative = 1e-13);
        assert_relative_eq!(p[3], -1.9e-5 * 1.25 * 69_222.222_222_222_22, max_relative = 1e-13);
    }

    #[test]
    fn full_field_is_affine_in_throttle() {
        let m = table1_model();
        let s = Vector4::new(3e5, 1e5, 230.0, 57_000.0);
        let chi = 0.4;
        let f0 = m.eval_f(&s, Controls { chi, pi: 0.0 });
        let f1 = m.eval_f(&s, Controls { chi, pi: 1.0 });
        assert_eq!(f0, m.eval_q(&s, chi));
        assert_relative_eq!(f1, m.eval_q(&s, chi) + m.eval_p(&s), max_relative = 1e-15);
        for pi in [0.0, 0.25, 0.7, 1.0] {
            let f = m.eval_f(&s, Controls { chi, pi });
            assert_relative_eq!(f - f0, (f1 - f0) * pi, epsilon = 1e-12);
            assert!(f[3] <= 0.0);
        }
    }

    #[test]
    fn chi_derivative_at_zero_heading() {
        let m = table1_model();
        let s = Vector4::new(0.0, 0.0, 200.0, 59_000.0);
        assert_eq!(m.dq_dchi(&s, 0.0), Vector4::new(-0.0, 200.0, 0.0, 0.0));
        assert!(m.jacobian_p(&s).row(0).iter().all(|&c| c == 0.0));
        assert!(m.jacobian_p(&s).row(1).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn zermelo_special_cases() {
        let zero = WindGradient::default();
        for chi in [-3.0, -1.0, 0.0, 0.4, FRAC_PI_2, 2.5] {
            assert_eq!(zermelo_rhs(chi, &zero), 0.0);
        }
        let k = 3.7e-6;
        let shear = WindGradient { dwx_dy: k, ..zero };
        assert_relative_eq!(zermelo_rhs(0.0, &shear), -k, max_relative = 1e-15);
        let cross = WindGradient { dwy_dx: k, ..zero };
        assert_relative_eq!(zermelo_rhs(FRAC_PI_2, &cross), k, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn sin_cos_form_matches_tan_form(
            chi in -6.0f64..6.0,
            g in proptest::array::uniform4(-1e-4f64..1e-4),
        ) {
            let grad = WindGradient { dwx_dx: g[0], dwx_dy: g[1], dwy_dx: g[2], dwy_dy: g[3] };
            prop_assume!(chi.tan().abs() < 1e6);
            let a = zermelo_rhs(chi, &grad);
            let b = zermelo_tan_form(chi, &grad);
            let scale = g.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            prop_assert!((a - b).abs() <= 1e-10 * scale.max(a.abs()));
        }

        #[test]
        fn jacobians_match_finite_differences(
            x in -2e5f64..1.7e6,
            y in -2e5f64..9e5,
            v in 150.0f64..300.0,
            mass in 45_000.0f64..70_000.0,
            chi in -3.0f64..3.0,
        ) {
            let m = table1_model();
            let s = Vector4::new(x, y, v, mass);
            let jq = m.jacobian_q(&s, chi);
            let jq_fd = fd_jacobian(|z| m.eval_q(z, chi), &s);
            let jp = m.jacobian_p(&s);
            let jp_fd = fd_jacobian(|z| m.eval_p(z), &s);
            for (an, fd) in [(jq, jq_fd), (jp, jp_fd)] {
                for k in 0..16 {
                    let tol = 1e-6 * an[k].abs().max(1e-9);
                    prop_assert!((an[k] - fd[k]).abs() <= tol, "{} vs {}", an[k], fd[k]);
                }
            }
            let h = 1e-6;
            let dchi_fd = (m.eval_q(&s, chi + h) - m.eval_q(&s, chi - h)) / (2.0 * h);
            let dchi = m.dq_dchi(&s, chi);
            for k in 0..4 {
                prop_assert!((dchi[k] - dchi_fd[k]).abs() <= 1e-6 * v);
            }
        }
    }
}
