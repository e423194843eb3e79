//! File formats: aircraft and scenario JSON in; trajectory CSV and solution
//! records out.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::atmosphere::AircraftModel;
use crate::direct::DirectGrid;
use crate::error::{Error, Result};
use crate::integrator::{ArcSchedule, IntegratorOptions};
use crate::pmp::Scaling;
use crate::scenario::{Problem, Scenario};
use crate::solver::{Method, NlpMetadata, Solution, VerificationReport, VerifyTolerances};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_aircraft(path: impl AsRef<Path>) -> Result<AircraftModel> {
    let model: AircraftModel = read_json(path.as_ref())?;
    model.validate()?;
    Ok(model)
}

/// Parses and validates a scenario file. The referenced aircraft file is not
/// opened here; see [`crate::scenario::Problem::load`].
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let scenario: Scenario = read_json(path.as_ref())?;
    scenario.validate()?;
    Ok(scenario)
}

/// Column order of trajectory CSV files.
pub const TRAJECTORY_HEADER: [&str; 17] = [
    "t", "x", "y", "v", "m", "chi", "pi", "S", "H", "lam_x", "lam_y", "lam_v", "lam_m", "lc", "detM", "mach",
    "cas_flag",
];

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Shortest round-trip scientific notation; empty for missing values.
fn number(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Writes one row per sample. Co-states are reported in SI units; S, H and
/// the Legendre–Clebsch margin in scaled units.
pub fn emit_trajectory_csv(sol: &Solution, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TRAJECTORY_HEADER).map_err(|e| csv_error(path, e))?;
    let scaling = Scaling::default();
    for s in &sol.trajectory.samples {
        let lam = s.costate.map(|c| c.to_si(&scaling));
        let l = |i: usize| lam.map(|v| v[i]);
        let row = [
            number(Some(s.t)),
            number(Some(s.state[0])),
            number(Some(s.state[1])),
            number(Some(s.state[2])),
            number(Some(s.state[3])),
            number(Some(s.chi)),
            number(Some(s.pi)),
            number(s.diag.s),
            number(s.diag.h),
            number(l(0)),
            number(l(1)),
            number(l(2)),
            number(l(3)),
            number(s.diag.lc),
            number(s.diag.det_m),
            number(Some(s.diag.mach)),
            u8::from(s.diag.cas_violated).to_string(),
        ];
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io_error(path))
}

/// Everything needed to reproduce and re-verify a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub method: Method,
    pub scenario: Scenario,
    /// Embedded so the record does not depend on the scenario's relative path.
    pub aircraft: AircraftModel,
    pub schedule: Option<ArcSchedule>,
    pub direct_grid: Option<DirectGrid>,
    pub integrator: IntegratorOptions,
    pub tolerances: VerifyTolerances,
    pub cost: f64,
    pub terminal_residuals: [f64; 3],
    pub nlp: NlpMetadata,
    pub verification: Option<VerificationReport>,
}

impl SolutionRecord {
    pub fn new(
        sol: &Solution,
        problem: &Problem,
        direct_grid: Option<&DirectGrid>,
        integrator: &IntegratorOptions,
        tolerances: &VerifyTolerances,
    ) -> Self {
        Self {
            method: sol.method,
            scenario: sol.scenario.clone(),
            aircraft: problem.model.aircraft,
            schedule: sol.schedule,
            direct_grid: direct_grid.cloned(),
            integrator: *integrator,
            tolerances: *tolerances,
            cost: sol.cost,
            terminal_residuals: sol.terminal_residuals,
            nlp: sol.nlp.clone(),
            verification: sol.verification.clone(),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.scenario.clone(), self.aircraft)
    }
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_error(path))
}

pub fn read_solution(path: impl AsRef<Path>) -> Result<SolutionRecord> {
    read_json(path.as_ref())
}

pub fn create_dir(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::create_dir_all(path).map_err(io_error(path))
}
