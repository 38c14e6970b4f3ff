//! Named scenarios for the rotor and ball experiments.

use crate::control::{ChainSource, Circle, FlcParams, IdapbcParams, StepSchedule};
use crate::drem::BankFilter;
use crate::error::{Error, Result};
use crate::plant::{OneDofState, PlantParams, TwoDofState};

use super::config::{
    BallInitial, BallObserverGains, BallReference, Diagnostics, OneDofConfig, PipelineConfig, RotorInitial,
    RotorObserverGains, RotorReference, RunOptions, ScenarioConfig, TwoDofConfig,
};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    build: fn() -> Vec<ScenarioConfig>,
}

impl Preset {
    pub fn scenarios(&self) -> Vec<ScenarioConfig> {
        (self.build)()
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "steps-2dof",
        description: "rotor, sensorless control, step setpoints, base initial conditions",
        build: || vec![ScenarioConfig::TwoDof(rotor_steps())],
    },
    Preset {
        name: "steps-2dof-full-state",
        description: "rotor, full-state control on the same step setpoints (observers still run)",
        build: || vec![ScenarioConfig::TwoDof(rotor_full_state())],
    },
    Preset {
        name: "steps-2dof-compare",
        description: "sensorless and full-state rotor runs side by side",
        build: || {
            vec![
                ScenarioConfig::TwoDof(rotor_steps()),
                ScenarioConfig::TwoDof(rotor_full_state()),
            ]
        },
    },
    Preset {
        name: "circle-2dof",
        description: "rotor, sensorless control, circular setpoint",
        build: || vec![ScenarioConfig::TwoDof(rotor_circle())],
    },
    Preset {
        name: "initial-conditions-2dof",
        description: "rotor step experiment from three sets of initial conditions",
        build: || rotor_initial_cases().into_iter().map(ScenarioConfig::TwoDof).collect(),
    },
    Preset {
        name: "estimator-gain-sweep-2dof",
        description: "rotor step experiment with estimator gains 1000, 500, 100",
        build: || {
            [1000.0, 500.0, 100.0]
                .into_iter()
                .map(|g| {
                    let mut c = rotor_steps();
                    c.name = format!("estimator-gain-{g}");
                    c.estimator_gains = [g; 4];
                    ScenarioConfig::TwoDof(c)
                })
                .collect()
        },
    },
    Preset {
        name: "observer-gain-sweep-2dof",
        description: "rotor step experiment with speed and position observer gains 2000, 1000, 5000",
        build: || {
            [2000.0, 1000.0, 5000.0]
                .into_iter()
                .map(|g| {
                    let mut c = rotor_steps();
                    c.name = format!("observer-gain-{g}");
                    c.observers = RotorObserverGains {
                        speed: [g; 2],
                        position: [g; 2],
                    };
                    // the stiffest observer needs a finer step for RK4 stability
                    c.run.dt = 5e-5;
                    c.run.record_every = 20;
                    ScenarioConfig::TwoDof(c)
                })
                .collect()
        },
    },
    Preset {
        name: "sin-1dof",
        description: "ball, sensorless control, smoothed sum of sines",
        build: || vec![ScenarioConfig::OneDof(ball_sines())],
    },
    Preset {
        name: "steps-1dof",
        description: "ball, sensorless control, smoothed steps",
        build: || vec![ScenarioConfig::OneDof(ball_steps())],
    },
    Preset {
        name: "estimator-gain-sweep-sin-1dof",
        description: "ball sines with estimator gains 1, 5, 10",
        build: || ball_gain_sweep(ball_sines(), &[1.0, 5.0, 10.0]),
    },
    Preset {
        name: "estimator-gain-sweep-steps-1dof",
        description: "ball steps with estimator gains 1e3, 5e3, 1e4",
        build: || ball_gain_sweep(ball_steps(), &[1e3, 5e3, 1e4]),
    },
    Preset {
        name: "offset-sweep-sin-1dof",
        description: "ball sines with flux offsets 0.01, 0.02, -0.02",
        build: || ball_offset_sweep(ball_sines()),
    },
    Preset {
        name: "offset-sweep-steps-1dof",
        description: "ball steps with flux offsets 0.01, 0.02, -0.02",
        build: || ball_offset_sweep(ball_steps()),
    },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Rotor step experiment, base initial conditions.
pub fn rotor_steps() -> TwoDofConfig {
    TwoDofConfig {
        name: "steps-2dof".into(),
        plant: PlantParams::two_dof_rig(),
        controller: IdapbcParams::rotor_defaults(),
        observers: RotorObserverGains {
            speed: [2000.0; 2],
            position: [2000.0; 2],
        },
        // distinct poles within each axis keep the extended matrix nonsingular
        bank: [
            BankFilter { gain: 200.0, pole: 30.0 },
            BankFilter { gain: 200.0, pole: 60.0 },
            BankFilter { gain: 200.0, pole: 30.0 },
            BankFilter { gain: 200.0, pole: 60.0 },
        ],
        estimator_gains: [500.0; 4],
        reference: RotorReference::Steps {
            vertical: StepSchedule::rotor_vertical(),
            horizontal: StepSchedule::rotor_horizontal(),
        },
        initial: rotor_case(0),
        diagnostics: Diagnostics::default(),
        run: RunOptions::with_horizon(0.8),
    }
}

pub fn rotor_full_state() -> TwoDofConfig {
    TwoDofConfig {
        name: "steps-2dof-full-state".into(),
        diagnostics: Diagnostics {
            true_flux: false,
            true_state: true,
        },
        ..rotor_steps()
    }
}

pub fn rotor_circle() -> TwoDofConfig {
    TwoDofConfig {
        name: "circle-2dof".into(),
        reference: RotorReference::circle(Circle::rotor_circle()),
        run: RunOptions::with_horizon(1.0),
        ..rotor_steps()
    }
}

pub fn rotor_initial_cases() -> Vec<TwoDofConfig> {
    (0..3)
        .map(|i| TwoDofConfig {
            name: format!("initial-case-{}", i + 1),
            initial: rotor_case(i),
            ..rotor_steps()
        })
        .collect()
}

/// The three reference rotor initial-condition sets.
pub fn rotor_case(index: usize) -> RotorInitial {
    let (flux, flux_estimate, mech, speed_estimate, position_estimate) = match index {
        0 => ([0.5, 0.6, 0.7, 0.2], [0.1, 0.5, 0.1, 0.5], [-0.001, 0.0, 0.0, 0.0], [0.0, 0.0], [0.0, 0.0]),
        1 => ([0.1, 0.2, 0.3, 0.5], [0.2, 0.3, 0.5, 0.8], [0.001, 0.01, 0.01, 0.01], [0.0, 0.0], [-0.001, 0.0]),
        _ => ([0.6, 0.6, 0.8, 0.1], [0.5, -0.3, 0.2, 0.1], [0.001, 0.01, 0.03, 0.02], [-0.01, 0.04], [-0.001, 0.02]),
    };
    RotorInitial {
        plant: TwoDofState {
            flux,
            vertical: mech[0],
            vertical_speed: mech[1],
            horizontal: mech[2],
            horizontal_speed: mech[3],
        },
        open_loop_flux: [0.0; 4],
        flux_estimate,
        speed_estimate,
        position_estimate,
    }
}

fn ball_base(name: &str, reference: BallReference, estimator_gain: f64, horizon: f64) -> OneDofConfig {
    let offset = 0.01;
    OneDofConfig {
        name: name.into(),
        plant: PlantParams::one_dof_rig(),
        controller: FlcParams::ball_defaults(),
        observers: BallObserverGains {
            speed: 2000.0,
            position: 2000.0,
        },
        pipeline: PipelineConfig {
            filter_rate: 10.0,
            washout_rate: 0.01,
        },
        bank: [1.0, 2.0, 5.0, 10.0].map(|pole| BankFilter { gain: 1.0, pole }),
        estimator_gain,
        reference,
        initial: BallInitial {
            plant: OneDofState {
                flux: offset,
                position: -1.0,
                speed: 0.5,
            },
            open_loop_flux: 0.0,
            offset_estimate: 1e-4,
            speed_estimate: 0.0,
            position_estimate: 0.0,
        },
        diagnostics: Diagnostics::default(),
        // the flux estimate starts near zero, so the start-up voltage is huge and
        // the flux rises like a square root over the first nanoseconds
        run: RunOptions {
            dt: 1e-4,
            record_every: 10,
            tolerance: Some(1e-10),
            ..RunOptions::with_horizon(horizon)
        },
    }
}

pub fn ball_sines() -> OneDofConfig {
    ball_base(
        "sin-1dof",
        BallReference {
            bandwidth: 10.0,
            source: ChainSource::ball_sines(),
        },
        1.0,
        6.0,
    )
}

pub fn ball_steps() -> OneDofConfig {
    ball_base(
        "steps-1dof",
        BallReference {
            bandwidth: 1.0,
            source: ChainSource::Steps {
                schedule: StepSchedule::ball_steps(),
            },
        },
        1e3,
        8.0,
    )
}

fn ball_gain_sweep(base: OneDofConfig, gains: &[f64]) -> Vec<ScenarioConfig> {
    gains
        .iter()
        .map(|&g| {
            let mut c = base.clone();
            c.name = format!("{}-estimator-gain-{g}", base.name);
            c.estimator_gain = g;
            ScenarioConfig::OneDof(c)
        })
        .collect()
}

fn ball_offset_sweep(base: OneDofConfig) -> Vec<ScenarioConfig> {
    [0.01, 0.02, -0.02]
        .into_iter()
        .map(|offset| {
            let mut c = base.clone();
            c.name = format!("{}-offset-{offset}", base.name);
            c.initial.plant.flux = c.initial.open_loop_flux + offset;
            ScenarioConfig::OneDof(c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for p in PRESETS {
            let scenarios = p.scenarios();
            assert!(!scenarios.is_empty(), "{}", p.name);
            for s in scenarios {
                s.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            }
        }
    }

    #[test]
    fn preset_names_are_unique() {
        let mut names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), PRESETS.len());
    }

    #[test]
    fn scenario_names_are_unique_within_a_preset() {
        for p in PRESETS {
            let mut names: Vec<_> = p.scenarios().iter().map(|s| s.name().to_string()).collect();
            let n = names.len();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), n, "{}", p.name);
        }
    }

    #[test]
    fn unknown_preset_is_reported() {
        assert!(matches!(find("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn configs_round_trip_through_json() {
        for p in PRESETS {
            for s in p.scenarios() {
                let text = serde_json::to_string(&s).unwrap();
                let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
                assert_eq!(back, s);
            }
        }
    }
}
