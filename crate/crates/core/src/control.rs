//! Feedback laws and reference generators.
//!
//! The rotor uses an interconnection-and-damping-assignment law with the
//! vertical and horizontal axes designed independently; the ball uses a
//! feedback-linearizing tracking law. Both are fed observer outputs in place
//! of the true state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{force, PlantParams};
use crate::signals::Rk4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdapbcParams {
    /// Shaping weight of the upper/left coils, > 0.
    pub shaping_upper: f64,
    /// Shaping weight of the lower/right coils, < 0.
    pub shaping_lower: f64,
    /// Damping injection gain, > 0.
    pub damping: f64,
    /// Virtual resistance, > 0.
    pub added_resistance: f64,
    /// Desired fluxes of the lower and right coils (Wb); they fix the equilibrium.
    pub bias_flux: [f64; 2],
}

impl IdapbcParams {
    pub fn rotor_defaults() -> Self {
        Self {
            shaping_upper: 10.0,
            shaping_lower: -10.0,
            damping: 800.0,
            added_resistance: 1.0,
            bias_flux: [2.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("controller.shaping_upper", self.shaping_upper),
            ("controller.damping", self.damping),
            ("controller.added_resistance", self.added_resistance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.shaping_lower.is_finite() && self.shaping_lower < 0.0) {
            return Err(Error::validation(
                "controller.shaping_lower",
                format!("must be negative, got {}", self.shaping_lower),
            ));
        }
        if !self.bias_flux.iter().all(|f| f.is_finite()) {
            return Err(Error::validation("controller.bias_flux", "must be finite"));
        }
        Ok(())
    }
}

/// Equilibrium fluxes of all four coils for the given lower/right bias fluxes.
pub fn equilibrium_map(bias_flux: [f64; 2], p: &PlantParams) -> [f64; 4] {
    let [lower, right] = bias_flux;
    let upper = (2.0 * p.flux_constant * p.mass * p.gravity + lower * lower).sqrt();
    [upper, lower, right, right]
}

/// Observer outputs consumed by the rotor controller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorEstimates {
    pub flux: [f64; 4],
    pub vertical: f64,
    pub horizontal: f64,
    pub vertical_speed: f64,
    pub horizontal_speed: f64,
}

/// Coil voltages of the rotor law. `setpoint` is `(vertical, horizontal)`.
pub fn idapbc_control(
    est: &RotorEstimates,
    current: &[f64; 4],
    setpoint: [f64; 2],
    c: &IdapbcParams,
    p: &PlantParams,
) -> [f64; 4] {
    let (r, k, m) = (p.resistance, p.flux_constant, p.mass);
    let (up, low, ra, gamma) = (c.shaping_upper, c.shaping_lower, c.added_resistance, c.damping);
    let eq = equilibrium_map(c.bias_flux, p);
    let flux_err: [f64; 4] = std::array::from_fn(|i| est.flux[i] - eq[i]);
    let flux_sq_err: [f64; 4] = std::array::from_fn(|i| est.flux[i] * est.flux[i] - eq[i] * eq[i]);

    let vertical_damping = gamma * (flux_err[0] / up + (est.vertical - setpoint[0]) + ra * m * est.vertical_speed);
    let horizontal_damping = gamma
        * (flux_err[2] / (2.0 * up) + flux_err[3] / (2.0 * low) + (est.horizontal - setpoint[1]) + ra * m * est.horizontal_speed);

    [
        r * current[0] - r / (2.0 * k * up) * flux_sq_err[0] - (r / up + up * ra) * vertical_damping - up * est.vertical_speed,
        r * current[1] + r / (2.0 * k * low) * flux_sq_err[1] - low * ra * vertical_damping - low * est.vertical_speed,
        r * current[2] - r / (2.0 * k * up) * flux_sq_err[2] - (r / (2.0 * up) + up * ra) * horizontal_damping
            - up * est.horizontal_speed,
        r * current[3] + r / (2.0 * k * low) * flux_sq_err[3] - (r / (2.0 * low) + low * ra) * horizontal_damping
            - low * est.horizontal_speed,
    ]
}

/// Gains of the target error polynomial `s³ + accel·s² + speed·s + position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlcParams {
    pub position_gain: f64,
    pub speed_gain: f64,
    pub accel_gain: f64,
}

impl FlcParams {
    /// Triple pole at −10.
    pub fn ball_defaults() -> Self {
        Self {
            position_gain: 1000.0,
            speed_gain: 300.0,
            accel_gain: 30.0,
        }
    }

    /// Routh conditions for a Hurwitz cubic.
    pub fn is_hurwitz(&self) -> bool {
        self.accel_gain > 0.0 && self.position_gain > 0.0 && self.speed_gain * self.accel_gain > self.position_gain
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_hurwitz() {
            Ok(())
        } else {
            Err(Error::validation(
                "controller.gains",
                "target polynomial is not Hurwitz (need accel_gain > 0, position_gain > 0, speed_gain·accel_gain > position_gain)",
            ))
        }
    }
}

/// Force floor below which the linearizing law is evaluated at the floor.
pub const MIN_FORCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlcOutput {
    pub voltage: f64,
    /// The estimated force fell to [`MIN_FORCE`] or below.
    pub singular: bool,
}

/// Reference value and its first three derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceState {
    pub value: f64,
    pub rate: f64,
    pub accel: f64,
    pub jerk: f64,
}

impl ReferenceState {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            ..Default::default()
        }
    }
}

/// Ball voltage from estimated flux, position and speed.
pub fn flc_control(flux: f64, position: f64, speed: f64, r: &ReferenceState, c: &FlcParams, p: &PlantParams) -> FlcOutput {
    let (k, m) = (p.flux_constant, p.mass);
    let raw = force(flux, k);
    let singular = raw <= MIN_FORCE;
    let f = raw.max(MIN_FORCE);
    let v = r.jerk - c.accel_gain * ((f / m - p.gravity) - r.accel) - c.speed_gain * (speed - r.rate) - c.position_gain * (position - r.value);
    FlcOutput {
        voltage: (k / (2.0 * f)).sqrt() * m * v + p.resistance * (p.nominal_gap - position) * (2.0 * f / k).sqrt(),
        singular,
    }
}

/// Piecewise-constant schedule; each value holds from its start time
/// (inclusive) until the next start time (exclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    /// `(start time, value)` pairs with increasing start times.
    pub steps: Vec<(f64, f64)>,
}

impl StepSchedule {
    pub fn value_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map(|&(_, v)| v)
            .unwrap_or_else(|| self.steps.first().map(|&(_, v)| v).unwrap_or(0.0))
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::validation(field, "needs at least one step"));
        }
        if self.steps.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::validation(field, "start times must increase"));
        }
        if self.steps.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::validation(field, "must be finite"));
        }
        Ok(())
    }

    /// Rotor vertical schedule of the step experiment.
    pub fn rotor_vertical() -> Self {
        Self {
            steps: vec![(0.0, 0.0), (0.2, 0.02), (0.4, -0.01), (0.6, 0.01)],
        }
    }

    /// Rotor horizontal schedule of the step experiment.
    pub fn rotor_horizontal() -> Self {
        Self {
            steps: vec![(0.0, 0.02), (0.2, 0.01), (0.4, -0.03), (0.6, -0.01)],
        }
    }

    /// Ball schedule fed through the smoothing chain.
    pub fn ball_steps() -> Self {
        Self {
            steps: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 0.0), (5.0, 3.0)],
        }
    }
}

/// `(horizontal, vertical) = radius·(sin ωt, cos ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub radius: f64,
    pub angular_rate: f64,
}

impl Circle {
    pub fn rotor_circle() -> Self {
        Self {
            radius: 0.1,
            angular_rate: 0.1,
        }
    }

    pub fn horizontal(&self, t: f64) -> ReferenceState {
        let (r, w) = (self.radius, self.angular_rate);
        let (s, c) = (w * t).sin_cos();
        ReferenceState {
            value: r * s,
            rate: r * w * c,
            accel: -r * w * w * s,
            jerk: -r * w * w * w * c,
        }
    }

    pub fn vertical(&self, t: f64) -> ReferenceState {
        let (r, w) = (self.radius, self.angular_rate);
        let (s, c) = (w * t).sin_cos();
        ReferenceState {
            value: r * c,
            rate: -r * w * s,
            accel: -r * w * w * c,
            jerk: r * w * w * w * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Raw signal fed into the smoothing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChainSource {
    Sines { terms: Vec<SineTerm> },
    Steps { schedule: StepSchedule },
}

impl ChainSource {
    pub fn ball_sines() -> Self {
        ChainSource::Sines {
            terms: vec![
                SineTerm {
                    amplitude: 1.0,
                    frequency: 1.0,
                    phase: 0.0,
                },
                SineTerm {
                    amplitude: 1.0,
                    frequency: 2.0,
                    phase: 0.0,
                },
                SineTerm {
                    amplitude: 0.5,
                    frequency: 3.7,
                    phase: std::f64::consts::FRAC_PI_3,
                },
            ],
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            ChainSource::Sines { terms } => terms.iter().map(|s| s.amplitude * (s.frequency * t + s.phase).sin()).sum(),
            ChainSource::Steps { schedule } => schedule.value_at(t),
        }
    }
}

/// Four cascaded `ν/(p+ν)` stages; the reference and its derivatives are
/// exact linear combinations of the stage states.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredChain {
    pub bandwidth: f64,
    pub source: ChainSource,
    pub stages: [f64; 4],
}

impl FilteredChain {
    pub fn new(bandwidth: f64, source: ChainSource) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::validation("reference.bandwidth", "must be positive"));
        }
        Ok(Self {
            bandwidth,
            source,
            stages: [0.0; 4],
        })
    }

    pub fn rate(&self, stages: &[f64], t: f64, d: &mut [f64]) {
        let nu = self.bandwidth;
        d[0] = nu * (self.source.value_at(t) - stages[0]);
        for i in 1..4 {
            d[i] = nu * (stages[i - 1] - stages[i]);
        }
    }

    pub fn reference_for(&self, s: &[f64]) -> ReferenceState {
        let nu = self.bandwidth;
        ReferenceState {
            value: s[3],
            rate: nu * (s[2] - s[3]),
            accel: nu * nu * (s[1] - 2.0 * s[2] + s[3]),
            jerk: nu * nu * nu * (s[0] - 3.0 * s[1] + 3.0 * s[2] - s[3]),
        }
    }

    pub fn reference(&self) -> ReferenceState {
        self.reference_for(&self.stages)
    }

    /// Advance from `t` to `t + dt`, sampling the source at RK4 stage times.
    pub fn step(&mut self, t: f64, dt: f64) -> ReferenceState {
        let mut rk = Rk4::new(4);
        let this = self.clone();
        rk.step(t, dt, &mut self.stages, |t, s, d| this.rate(s, t, d));
        self.reference()
    }
}
