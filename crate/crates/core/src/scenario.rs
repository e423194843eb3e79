use std::path::{Path, PathBuf};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::atmosphere::{AircraftModel, Atmosphere};
use crate::dynamics::CruiseModel;
use crate::error::{Error, Result};
use crate::wind::{WindConfig, WindField};

/// Cruise leg, cost weight and throttle bounds. `aircraft` is a path to a
/// coefficient file, resolved relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub aircraft: PathBuf,
    pub x0_m: f64,
    pub y0_m: f64,
    pub xf_m: f64,
    pub yf_m: f64,
    pub v0_mps: f64,
    pub vf_mps: f64,
    pub m0_kg: f64,
    pub h_m: f64,
    pub alpha: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub wind: WindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atmosphere: Option<Atmosphere>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("x0_m", self.x0_m),
            ("y0_m", self.y0_m),
            ("xf_m", self.xf_m),
            ("yf_m", self.yf_m),
            ("m0_kg", self.m0_kg),
            ("h_m", self.h_m),
            ("pi_min", self.pi_min),
            ("pi_max", self.pi_max),
        ] {
            if !value.is_finite() {
                return Err(Error::validation(field, format!("must be finite, got {value}")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(Error::validation(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if !(self.pi_min < self.pi_max) {
            return Err(Error::validation("pi_min", "must be below pi_max"));
        }
        if !(self.v0_mps.is_finite() && self.v0_mps > 0.0) {
            return Err(Error::validation("v0_mps", "must be positive"));
        }
        if !(self.vf_mps.is_finite() && self.vf_mps > 0.0) {
            return Err(Error::validation("vf_mps", "must be positive"));
        }
        if !(self.m0_kg > 0.0) {
            return Err(Error::validation("m0_kg", "must be positive"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Vector4<f64> {
        Vector4::new(self.x0_m, self.y0_m, self.v0_mps, self.m0_kg)
    }

    /// Target (x, y, v) at the final time.
    pub fn target(&self) -> [f64; 3] {
        [self.xf_m, self.yf_m, self.vf_mps]
    }

    pub fn wind_field(&self) -> Result<WindField> {
        WindField::from_config(&self.wind, self.xf_m, self.yf_m)
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    /// Planar leg length.
    pub fn distance(&self) -> f64 {
        (self.xf_m - self.x0_m).hypot(self.yf_m - self.y0_m)
    }
}

/// A validated scenario together with the models it references.
#[derive(Debug, Clone)]
pub struct Problem {
    pub scenario: Scenario,
    pub model: CruiseModel,
}

impl Problem {
    pub fn new(scenario: Scenario, aircraft: AircraftModel) -> Result<Self> {
        scenario.validate()?;
        let wind = scenario.wind_field()?;
        let atmosphere = scenario.atmosphere.unwrap_or_default();
        let model = CruiseModel::new(aircraft, atmosphere, wind, scenario.h_m)?;
        model.check_state(&scenario.initial_state())?;
        Ok(Self { scenario, model })
    }

    /// Loads the scenario and the aircraft file it references.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let scenario = crate::io::load_scenario(path)?;
        let aircraft_path = resolve_relative(path, &scenario.aircraft);
        let aircraft = crate::io::load_aircraft(&aircraft_path)?;
        Self::new(scenario, aircraft)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let scenario = self.scenario.with_alpha(alpha);
        scenario.validate()?;
        Ok(Self {
            scenario,
            model: self.model.clone(),
        })
    }

    /// Same problem under a different wind.
    pub fn with_wind(&self, wind: WindConfig) -> Result<Self> {
        let scenario = Scenario {
            wind,
            ..self.scenario.clone()
        };
        Self::new(scenario, self.model.aircraft)
    }
}

pub(crate) fn resolve_relative(base_file: &Path, target: &Path) -> PathBuf {
    if target.is_absolute() {
        return target.to_path_buf();
    }
    match base_file.parent() {
        Some(dir) => dir.join(target),
        None => target.to_path_buf(),
    }
}
