//! Declarative scenario descriptions, serialized as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ChainSource, Circle, FlcParams, IdapbcParams, StepSchedule};
use crate::drem::BankFilter;
use crate::error::{Error, Result};
use crate::plant::{OneDofState, PlantParams, TwoDofState};
use crate::signals::IntegratorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "kebab-case")]
pub enum ScenarioConfig {
    TwoDof(TwoDofConfig),
    OneDof(OneDofConfig),
}

/// A scenario file holds one scenario or a list run as a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioFile {
    One(Box<ScenarioConfig>),
    Many(Vec<ScenarioConfig>),
}

impl ScenarioFile {
    pub fn into_vec(self) -> Vec<ScenarioConfig> {
        match self {
            ScenarioFile::One(c) => vec![*c],
            ScenarioFile::Many(v) => v,
        }
    }
}

pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let scenarios = file.into_vec();
    if scenarios.is_empty() {
        return Err(Error::validation("scenarios", "file lists no scenario"));
    }
    for s in &scenarios {
        s.validate()?;
    }
    Ok(scenarios)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    /// Record one sample every this many integration steps.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Stop with an error when the rotor leaves the air gap.
    #[serde(default)]
    pub abort_on_domain_violation: bool,
    /// Local error tolerance for RK4 substeps inside each step; plain RK4 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn default_dt() -> f64 {
    IntegratorSpec::DEFAULT_DT
}

fn default_record_every() -> usize {
    10
}

impl RunOptions {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            dt: default_dt(),
            horizon,
            record_every: default_record_every(),
            abort_on_domain_violation: false,
            tolerance: None,
        }
    }

    fn validate(&self) -> Result<()> {
        IntegratorSpec::new(self.dt).map_err(|_| Error::validation("run.dt", format!("must be positive, got {}", self.dt)))?;
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::validation("run.horizon", format!("must be non-negative, got {}", self.horizon)));
        }
        if let Some(tol) = self.tolerance {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::validation("run.tolerance", format!("must be positive, got {tol}")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::validation("run.record_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Diagnostic switches that bypass parts of the estimation chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    /// Feed the true flux to observers and controller instead of the estimate.
    #[serde(default)]
    pub true_flux: bool,
    /// Feed the true plant state to the controller (full-state feedback).
    #[serde(default)]
    pub true_state: bool,
}

/// Observer gains, `(vertical, horizontal)` for the rotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorObserverGains {
    pub speed: [f64; 2],
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RotorReference {
    Steps {
        vertical: StepSchedule,
        horizontal: StepSchedule,
    },
    Circle {
        radius: f64,
        angular_rate: f64,
    },
}

impl RotorReference {
    pub fn circle(c: Circle) -> Self {
        RotorReference::Circle {
            radius: c.radius,
            angular_rate: c.angular_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorInitial {
    pub plant: TwoDofState,
    pub open_loop_flux: [f64; 4],
    pub flux_estimate: [f64; 4],
    /// `(vertical, horizontal)`
    pub speed_estimate: [f64; 2],
    /// `(vertical, horizontal)`
    pub position_estimate: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoDofConfig {
    pub name: String,
    pub plant: PlantParams,
    pub controller: IdapbcParams,
    pub observers: RotorObserverGains,
    /// Filters 1–2 extend the vertical regression, 3–4 the horizontal one.
    pub bank: [BankFilter; 4],
    pub estimator_gains: [f64; 4],
    pub reference: RotorReference,
    pub initial: RotorInitial,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    pub run: RunOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallObserverGains {
    pub speed: f64,
    pub position: f64,
}

/// Corners of the regression pipeline filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Corner of the low-pass used throughout the regression construction.
    pub filter_rate: f64,
    /// Corner of the final washout.
    pub washout_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallReference {
    /// Bandwidth of the four-stage smoothing chain.
    pub bandwidth: f64,
    pub source: ChainSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallInitial {
    pub plant: OneDofState,
    pub open_loop_flux: f64,
    pub offset_estimate: f64,
    pub speed_estimate: f64,
    pub position_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneDofConfig {
    pub name: String,
    pub plant: PlantParams,
    pub controller: FlcParams,
    pub observers: BallObserverGains,
    pub pipeline: PipelineConfig,
    pub bank: [BankFilter; 4],
    pub estimator_gain: f64,
    pub reference: BallReference,
    pub initial: BallInitial,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    pub run: RunOptions,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive, got {v}")))
    }
}

fn finite(field: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(field, "must be finite"))
    }
}

fn validate_bank(bank: &[BankFilter; 4]) -> Result<()> {
    for (j, f) in bank.iter().enumerate() {
        positive(&format!("bank[{j}].pole"), f.pole)?;
        finite(&format!("bank[{j}].gain"), &[f.gain])?;
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn name(&self) -> &str {
        match self {
            ScenarioConfig::TwoDof(c) => &c.name,
            ScenarioConfig::OneDof(c) => &c.name,
        }
    }

    pub fn run_options(&self) -> &RunOptions {
        match self {
            ScenarioConfig::TwoDof(c) => &c.run,
            ScenarioConfig::OneDof(c) => &c.run,
        }
    }

    pub fn run_options_mut(&mut self) -> &mut RunOptions {
        match self {
            ScenarioConfig::TwoDof(c) => &mut c.run,
            ScenarioConfig::OneDof(c) => &mut c.run,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScenarioConfig::TwoDof(c) => c.validate(),
            ScenarioConfig::OneDof(c) => c.validate(),
        }
    }
}

impl TwoDofConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        self.plant.validate()?;
        self.controller.validate()?;
        for (i, g) in self.observers.speed.iter().enumerate() {
            positive(&format!("observers.speed[{i}]"), *g)?;
        }
        for (i, g) in self.observers.position.iter().enumerate() {
            positive(&format!("observers.position[{i}]"), *g)?;
        }
        validate_bank(&self.bank)?;
        for (i, g) in self.estimator_gains.iter().enumerate() {
            positive(&format!("estimator_gains[{i}]"), *g)?;
        }
        match &self.reference {
            RotorReference::Steps { vertical, horizontal } => {
                vertical.validate("reference.vertical")?;
                horizontal.validate("reference.horizontal")?;
            }
            RotorReference::Circle { radius, angular_rate } => finite("reference", &[*radius, *angular_rate])?,
        }
        let i = &self.initial;
        let mut values = Vec::from(i.plant.flux);
        values.extend([i.plant.vertical, i.plant.vertical_speed, i.plant.horizontal, i.plant.horizontal_speed]);
        values.extend(i.open_loop_flux);
        values.extend(i.flux_estimate);
        values.extend(i.speed_estimate);
        values.extend(i.position_estimate);
        finite("initial", &values)?;
        self.run.validate()
    }
}

impl OneDofConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        self.plant.validate()?;
        self.controller.validate()?;
        positive("observers.speed", self.observers.speed)?;
        positive("observers.position", self.observers.position)?;
        positive("pipeline.filter_rate", self.pipeline.filter_rate)?;
        positive("pipeline.washout_rate", self.pipeline.washout_rate)?;
        validate_bank(&self.bank)?;
        positive("estimator_gain", self.estimator_gain)?;
        positive("reference.bandwidth", self.reference.bandwidth)?;
        if let ChainSource::Steps { schedule } = &self.reference.source {
            schedule.validate("reference.source.schedule")?;
        }
        let i = &self.initial;
        finite(
            "initial",
            &[
                i.plant.flux,
                i.plant.position,
                i.plant.speed,
                i.open_loop_flux,
                i.offset_estimate,
                i.speed_estimate,
                i.position_estimate,
            ],
        )?;
        self.run.validate()
    }
}
