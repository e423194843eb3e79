//! ISA troposphere and the BADA3-style performance model.
//!
//! Maximum thrust, parabolic drag polar and the speed-dependent thrust
//! specific fuel consumption, together with their analytic partials. The
//! Mach / calibrated-airspeed envelope is evaluated here as a monitor only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atmosphere constants. Defaults are the ISA sea-level values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atmosphere {
    /// Sea-level pressure (Pa).
    #[serde(rename = "P0_Pa")]
    pub p0: f64,
    /// Sea-level temperature (K).
    #[serde(rename = "Theta0_K")]
    pub theta0: f64,
    /// Temperature lapse rate (K/m).
    #[serde(rename = "beta_K_per_m")]
    pub beta: f64,
    /// Specific gas constant of air (J/(kg K)).
    #[serde(rename = "R_J_per_kgK")]
    pub r: f64,
    /// Gravitational acceleration (m/s^2).
    #[serde(rename = "g_mps2")]
    pub g: f64,
    /// Ratio of specific heats.
    #[serde(rename = "kappa", default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    1.4
}

impl Default for Atmosphere {
    fn default() -> Self {
        Self {
            p0: 101_325.0,
            theta0: 288.15,
            beta: 0.0065,
            r: 287.052_87,
            g: 9.806_65,
            kappa: default_kappa(),
        }
    }
}

impl Atmosphere {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("P0_Pa", self.p0),
            ("Theta0_K", self.theta0),
            ("beta_K_per_m", self.beta),
            ("R_J_per_kgK", self.r),
            ("g_mps2", self.g),
            ("kappa", self.kappa),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(field, format!("must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Temperature at altitude `h` (K).
    pub fn temperature(&self, h: f64) -> Result<f64> {
        let theta = self.theta0 - self.beta * h;
        if !(h.is_finite() && theta > 0.0) {
            return Err(Error::Domain(format!(
                "altitude {h} m is outside the modelled troposphere (Θ = {theta} K)"
            )));
        }
        Ok(theta)
    }

    /// Static pressure at altitude `h` (Pa).
    pub fn pressure(&self, h: f64) -> Result<f64> {
        let theta = self.temperature(h)?;
        Ok(self.p0 * (theta / self.theta0).powf(self.g / (self.beta * self.r)))
    }

    pub fn speed_of_sound(&self, h: f64) -> Result<f64> {
        Ok((self.kappa * self.r * self.temperature(h)?).sqrt())
    }

    pub fn sea_level_density(&self) -> f64 {
        self.p0 / (self.r * self.theta0)
    }
}

/// Air density ρ(h) = P(h) / (R (Θ0 − β h)).
pub fn air_density(atm: &Atmosphere, h: f64) -> Result<f64> {
    let theta = atm.temperature(h)?;
    Ok(atm.pressure(h)? / (atm.r * theta))
}

/// Aircraft coefficient set. Field names follow the coefficient file schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AircraftModel {
    /// Max-thrust coefficient (N).
    #[serde(rename = "C_T1")]
    pub c_t1: f64,
    /// Max-thrust altitude scale (m).
    #[serde(rename = "C_T2")]
    pub c_t2: f64,
    /// Max-thrust quadratic coefficient (1/m^2).
    #[serde(rename = "C_T3")]
    pub c_t3: f64,
    /// Wing reference area (m^2).
    pub s: f64,
    /// Parasitic drag coefficient.
    #[serde(rename = "C_D1")]
    pub c_d1: f64,
    /// Induced drag coefficient.
    #[serde(rename = "C_D2")]
    pub c_d2: f64,
    /// Thrust specific fuel consumption (kg/(s N)).
    #[serde(rename = "C_s1")]
    pub c_s1: f64,
    /// Fuel consumption speed scale (m/s).
    #[serde(rename = "C_s2")]
    pub c_s2: f64,
    /// Lower plausibility bound on mass (kg).
    pub m_min: f64,
    #[serde(rename = "M_min")]
    pub mach_min: f64,
    #[serde(rename = "M_max")]
    pub mach_max: f64,
    /// Calibrated airspeed bounds (m/s).
    #[serde(rename = "v_CAS_min")]
    pub v_cas_min: f64,
    #[serde(rename = "v_CAS_max")]
    pub v_cas_max: f64,
}

impl AircraftModel {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("C_T1", self.c_t1),
            ("C_T2", self.c_t2),
            ("s", self.s),
            ("C_D1", self.c_d1),
            ("C_D2", self.c_d2),
            ("C_s1", self.c_s1),
            ("C_s2", self.c_s2),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(field, format!("must be positive, got {value}")));
            }
        }
        for (field, value) in [
            ("C_T3", self.c_t3),
            ("m_min", self.m_min),
            ("M_min", self.mach_min),
            ("M_max", self.mach_max),
            ("v_CAS_min", self.v_cas_min),
            ("v_CAS_max", self.v_cas_max),
        ] {
            if !value.is_finite() {
                return Err(Error::validation(field, format!("must be finite, got {value}")));
            }
        }
        if self.mach_min >= self.mach_max {
            return Err(Error::validation("M_min", "must be below M_max"));
        }
        if self.v_cas_min >= self.v_cas_max {
            return Err(Error::validation("v_CAS_min", "must be below v_CAS_max"));
        }
        Ok(())
    }
}

/// T_max(h) = C_T1 (1 − h/C_T2 + h² C_T3).
pub fn max_thrust(model: &AircraftModel, h: f64) -> Result<f64> {
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::Domain(format!("altitude {h} m is not admissible")));
    }
    let t = model.c_t1 * (1.0 - h / model.c_t2 + h * h * model.c_t3);
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::ModelInconsistency(format!(
            "maximum thrust at h = {h} m evaluates to {t} N"
        )));
    }
    Ok(t)
}

/// dT_max/dh (N/m).
pub fn max_thrust_dh(model: &AircraftModel, h: f64) -> f64 {
    model.c_t1 * (-1.0 / model.c_t2 + 2.0 * h * model.c_t3)
}

/// C_s(v) = C_s1 (1 + v/C_s2), with its (constant) derivative.
pub fn fuel_flow_coeff(model: &AircraftModel, v: f64) -> f64 {
    model.c_s1 * (1.0 + v / model.c_s2)
}

pub fn fuel_flow_coeff_dv(model: &AircraftModel) -> f64 {
    model.c_s1 / model.c_s2
}

/// Drag and its analytic partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragEval {
    pub value: f64,
    pub d_dv: f64,
    pub d_dm: f64,
}

/// Parabolic drag polar at a fixed density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragPolar {
    /// ½ ρ s C_D1
    parasitic: f64,
    /// 2 C_D2 g² / (ρ s)
    induced: f64,
}

impl DragPolar {
    pub fn new(model: &AircraftModel, rho: f64, g: f64) -> Self {
        Self {
            parasitic: 0.5 * rho * model.s * model.c_d1,
            induced: 2.0 * model.c_d2 * g * g / (rho * model.s),
        }
    }

    /// D = ½ρ s v² C_D1 + C_D2 · 2 m² g² / (ρ s v²), which is the polar with
    /// C_l = 2 m g / (ρ s v²) substituted.
    #[inline]
    pub fn eval(&self, m: f64, v: f64) -> DragEval {
        let v2 = v * v;
        let par = self.parasitic * v2;
        let ind = self.induced * m * m / v2;
        DragEval {
            value: par + ind,
            d_dv: 2.0 * par / v - 2.0 * ind / v,
            d_dm: 2.0 * ind / m,
        }
    }
}

pub fn drag(model: &AircraftModel, atm: &Atmosphere, m: f64, v: f64, h: f64) -> Result<DragEval> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!(
            "airspeed {v} m/s: lift coefficient is singular for v <= 0"
        )));
    }
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Domain(format!("mass {m} kg must be positive")));
    }
    let rho = air_density(atm, h)?;
    Ok(DragPolar::new(model, rho, atm.g).eval(m, v))
}

/// Per-bound outcome of the envelope monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub satisfied: bool,
    /// Distance to the bound; negative when violated.
    pub margin: f64,
}

impl BoundCheck {
    fn lower(value: f64, bound: f64) -> Self {
        let margin = value - bound;
        Self {
            satisfied: margin >= 0.0,
            margin,
        }
    }

    fn upper(value: f64, bound: f64) -> Self {
        let margin = bound - value;
        Self {
            satisfied: margin >= 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub mach: f64,
    pub cas: f64,
    pub mach_min: BoundCheck,
    pub mach_max: BoundCheck,
    pub cas_min: BoundCheck,
    pub cas_max: BoundCheck,
}

impl EnvelopeReport {
    pub fn mach_ok(&self) -> bool {
        self.mach_min.satisfied && self.mach_max.satisfied
    }

    pub fn cas_ok(&self) -> bool {
        self.cas_min.satisfied && self.cas_max.satisfied
    }

    pub fn all_ok(&self) -> bool {
        self.mach_ok() && self.cas_ok()
    }
}

/// Calibrated airspeed from true airspeed through the isentropic impact
/// pressure.
pub fn calibrated_airspeed(atm: &Atmosphere, v: f64, h: f64) -> Result<f64> {
    let k = atm.kappa;
    let mach = v / atm.speed_of_sound(h)?;
    let p = atm.pressure(h)?;
    let qc = p * ((1.0 + 0.5 * (k - 1.0) * mach * mach).powf(k / (k - 1.0)) - 1.0);
    let rho0 = atm.sea_level_density();
    let inner = (qc / atm.p0 + 1.0).powf((k - 1.0) / k) - 1.0;
    Ok((2.0 * k / (k - 1.0) * atm.p0 / rho0 * inner).sqrt())
}

/// Evaluates the Mach and CAS bounds. Violations are reported, never enforced.
pub fn check_envelope(model: &AircraftModel, atm: &Atmosphere, v: f64, h: f64) -> Result<EnvelopeReport> {
    let mach = v / atm.speed_of_sound(h)?;
    let cas = calibrated_airspeed(atm, v, h)?;
    Ok(EnvelopeReport {
        mach,
        cas,
        mach_min: BoundCheck::lower(mach, model.mach_min),
        mach_max: BoundCheck::upper(mach, model.mach_max),
        cas_min: BoundCheck::lower(cas, model.v_cas_min),
        cas_max: BoundCheck::upper(cas, model.v_cas_max),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn a320() -> AircraftModel {
        crate::io::load_aircraft(concat!(env!("CARGO_MANIFEST_DIR"), "/data/a320_class.json")).unwrap()
    }

    fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    /// Fourth-order central difference.
    fn central5<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn thrust_at_zero_altitude_is_ct1() {
        let m = a320();
        assert_eq!(max_thrust(&m, 0.0).unwrap(), m.c_t1);
    }

    #[test]
    fn thrust_vanishes_at_ct2_without_quadratic_term() {
        let m = AircraftModel { c_t3: 0.0, ..a320() };
        assert_eq!(max_thrust(&m, m.c_t2).unwrap(), 0.0);
    }

    #[test]
    fn thrust_golden_value_at_cruise_altitude() {
        // 140000 * (1 - 10000/18000 + 1e8 * 5e-10), evaluated by hand
        let t = max_thrust(&a320(), 10_000.0).unwrap();
        assert_relative_eq!(t, 69_222.222_222_222_22, max_relative = 1e-14);
    }

    #[test]
    fn negative_thrust_is_a_model_inconsistency() {
        let m = AircraftModel { c_t3: 0.0, ..a320() };
        assert!(matches!(
            max_thrust(&m, 2.0 * m.c_t2),
            Err(Error::ModelInconsistency(_))
        ));
    }

    #[test]
    fn isa_density_values() {
        let atm = Atmosphere::default();
        assert_relative_eq!(air_density(&atm, 0.0).unwrap(), 1.225, max_relative = 1e-4);
        assert_relative_eq!(air_density(&atm, 10_000.0).unwrap(), 0.4127, max_relative = 1e-4);
        assert!(air_density(&atm, 1e6).is_err());
    }

    #[test]
    fn density_decreases_through_troposphere() {
        let atm = Atmosphere::default();
        let mut prev = f64::INFINITY;
        for i in 0..=110 {
            let rho = air_density(&atm, 100.0 * i as f64).unwrap();
            assert!(rho < prev);
            prev = rho;
        }
    }

    #[test]
    fn drag_reduces_to_parasitic_without_induced_term() {
        let m = AircraftModel { c_d2: 0.0, ..a320() };
        let atm = Atmosphere::default();
        let rho = air_density(&atm, 10_000.0).unwrap();
        let d1 = drag(&m, &atm, 50_000.0, 200.0, 10_000.0).unwrap();
        let d2 = drag(&m, &atm, 70_000.0, 200.0, 10_000.0).unwrap();
        assert_relative_eq!(d1.value, 0.5 * rho * m.s * 200.0 * 200.0 * m.c_d1, max_relative = 1e-14);
        assert_eq!(d1.value, d2.value);
        let d4 = drag(&m, &atm, 50_000.0, 400.0, 10_000.0).unwrap();
        assert_relative_eq!(d4.value, 4.0 * d1.value, max_relative = 1e-14);
    }

    #[test]
    fn drag_rejects_nonpositive_speed() {
        let atm = Atmosphere::default();
        assert!(matches!(
            drag(&a320(), &atm, 59_000.0, 0.0, 10_000.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fuel_flow_coefficient_is_affine() {
        let m = a320();
        assert_eq!(fuel_flow_coeff(&m, 0.0), m.c_s1);
        assert_relative_eq!(fuel_flow_coeff(&m, m.c_s2), 2.0 * m.c_s1, max_relative = 1e-15);
        let (a, b) = (123.0, 77.0);
        assert_relative_eq!(
            fuel_flow_coeff(&m, a) + fuel_flow_coeff(&m, b),
            fuel_flow_coeff(&m, a + b) + m.c_s1,
            max_relative = 1e-14
        );
    }

    #[test]
    fn envelope_mach_and_bounds() {
        let m = a320();
        let atm = Atmosphere::default();
        let rep = check_envelope(&m, &atm, 200.0, 10_000.0).unwrap();
        let a = (1.4f64 * 287.052_87 * 223.15).sqrt();
        assert_relative_eq!(rep.mach, 200.0 / a, max_relative = 1e-12);
        assert!((rep.mach - 0.668).abs() < 1e-3);

        let rep0 = check_envelope(&m, &atm, 0.0, 10_000.0).unwrap();
        assert_eq!(rep0.mach, 0.0);
        assert!(!rep0.mach_min.satisfied && !rep0.cas_min.satisfied);

        let v_top = m.mach_max * atm.speed_of_sound(10_000.0).unwrap();
        let rep_top = check_envelope(&m, &atm, v_top, 10_000.0).unwrap();
        assert!(rep_top.mach_max.margin.abs() < 1e-12);
    }

    #[test]
    fn cas_equals_tas_at_sea_level() {
        let atm = Atmosphere::default();
        for v in [50.0, 150.0, 250.0] {
            assert_relative_eq!(calibrated_airspeed(&atm, v, 0.0).unwrap(), v, max_relative = 1e-12);
        }
        // CAS falls below TAS aloft
        assert!(calibrated_airspeed(&atm, 230.0, 10_000.0).unwrap() < 160.0);
    }

    proptest! {
        #[test]
        fn analytic_partials_match_finite_differences(
            m in 40_000.0f64..78_000.0,
            v in 120.0f64..320.0,
            h in 0.0f64..11_000.0,
        ) {
            let model = a320();
            let atm = Atmosphere::default();
            let d = drag(&model, &atm, m, v, h).unwrap();
            let fd_v = central5(|x| drag(&model, &atm, m, x, h).unwrap().value, v, 1e-3 * v);
            let fd_m = central5(|x| drag(&model, &atm, x, v, h).unwrap().value, m, 1e-3 * m);
            prop_assert!((d.d_dv - fd_v).abs() <= 1e-6 * d.d_dv.abs().max(1e-3 * d.value / v));
            prop_assert!((d.d_dm - fd_m).abs() <= 1e-6 * d.d_dm.abs());
            let fd_cs = central(|x| fuel_flow_coeff(&model, x), v, 1e-3 * v);
            prop_assert!((fuel_flow_coeff_dv(&model) - fd_cs).abs() <= 1e-6 * fuel_flow_coeff_dv(&model));
            let fd_t = central(|x| max_thrust(&model, x).unwrap(), h.max(1.0), 0.5);
            let dt = max_thrust_dh(&model, h.max(1.0));
            prop_assert!((dt - fd_t).abs() <= 1e-6 * dt.abs());
        }

        #[test]
        fn induced_drag_is_nonnegative(
            m in 40_000.0f64..78_000.0,
            v in 50.0f64..350.0,
            h in 0.0f64..11_000.0,
        ) {
            let model = a320();
            let atm = Atmosphere::default();
            let rho = air_density(&atm, h).unwrap();
            let d = drag(&model, &atm, m, v, h).unwrap().value;
            prop_assert!(d >= 0.5 * rho * model.s * v * v * model.c_d1);
        }
    }
}
