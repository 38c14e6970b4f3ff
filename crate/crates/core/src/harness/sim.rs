//! Joint fixed-step simulation of plant, estimators and controller.
//!
//! Everything with continuous dynamics lives in one state vector advanced by
//! RK4; the controller is evaluated at every RK4 stage from the estimates of
//! that stage. The DREM parameter estimates are held over a step and updated
//! after it from the extended regressors at both ends of the step.

use rayon::prelude::*;

use crate::control::{flc_control, idapbc_control, Circle, FilteredChain, ReferenceState, RotorEstimates};
use crate::drem::{ExcitationMonitor, ExtendedRegressor, GradientEstimator, OneDofDrem, TwoDofDrem};
use crate::error::{Error, Result};
use crate::mech::{Axis, AxisSignals, PositionObserver, SpeedObserver};
use crate::pebo::{build_regressors_2dof, OneDofPebo, OneDofRegressionSample, PipelineInputs, TwoDofRegressionSample};
use crate::plant::{current_1dof, currents_2dof, derivatives_1dof, derivatives_2dof, OneDofState, PlantParams, TwoDofState};
use crate::signals::{IntegratorSpec, SubstepRk4};

use super::config::{OneDofConfig, RotorReference, RunOptions, ScenarioConfig, TwoDofConfig};
use super::record::{Event, EventKind, MonotonicityTrace, RunRecord, System};

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunRecord> {
    match cfg {
        ScenarioConfig::TwoDof(c) => run_two_dof(c),
        ScenarioConfig::OneDof(c) => run_one_dof(c),
    }
}

/// Like [`run_scenario`] but keeps the samples recorded before a mid-run
/// failure. Configuration errors still yield no record.
pub fn run_scenario_partial(cfg: &ScenarioConfig) -> Result<(RunRecord, Option<Error>)> {
    match cfg {
        ScenarioConfig::TwoDof(c) => {
            let mut rec = rotor_record(c)?;
            let outcome = simulate_two_dof(c, &mut rec).err();
            Ok((rec, outcome))
        }
        ScenarioConfig::OneDof(c) => {
            let mut rec = ball_record(c)?;
            let outcome = simulate_one_dof(c, &mut rec).err();
            Ok((rec, outcome))
        }
    }
}

/// Runs independent scenarios concurrently; results keep the input order.
pub fn run_batch(cfgs: &[ScenarioConfig]) -> Vec<Result<RunRecord>> {
    cfgs.par_iter().map(run_scenario).collect()
}

/// Concurrent [`run_scenario_partial`].
pub fn run_batch_partial(cfgs: &[ScenarioConfig]) -> Vec<Result<(RunRecord, Option<Error>)>> {
    cfgs.par_iter().map(run_scenario_partial).collect()
}

fn check_finite(block: &str, values: &[f64], t: f64) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::non_finite(block, Some(t)))
    }
}

/// Tracks entry and exit of the air gap and turns them into events.
struct DomainWatch {
    inside: bool,
    abort: bool,
}

impl DomainWatch {
    fn new(abort: bool) -> Self {
        Self { inside: true, abort }
    }

    fn observe(&mut self, t: f64, inside: bool, detail: impl FnOnce() -> String, events: &mut Vec<Event>) -> Result<()> {
        if inside == self.inside {
            return Ok(());
        }
        self.inside = inside;
        let detail = detail();
        if !inside && self.abort {
            return Err(Error::DomainViolation { t, detail });
        }
        events.push(Event {
            t,
            kind: if inside {
                EventKind::ReturnedToDomain
            } else {
                EventKind::LeftDomain
            },
            detail,
        });
        Ok(())
    }
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

fn timing(run: &RunOptions) -> Result<(f64, usize)> {
    let spec = IntegratorSpec::new(run.dt)?;
    Ok((spec.dt, spec.steps_for(run.horizon)))
}

// ---------------------------------------------------------------------------
// 2-dof rotor

const R_PLANT: usize = 0;
const R_PSI: usize = 8;
const R_BANK: usize = 12;
const R_SPEED: usize = R_BANK + TwoDofDrem::STATE_DIM;
const R_POS: usize = R_SPEED + 2;
const R_DIM: usize = R_POS + 2;

/// Column order of the rotor CSV.
pub fn rotor_columns() -> Vec<String> {
    let mut c = columns(&["t"]);
    c.extend(numbered("lambda", 4));
    c.extend(columns(&["Y", "vY", "X", "vX"]));
    c.extend(numbered("hat_lambda", 4));
    c.extend(numbered("hat_theta", 4));
    c.extend(columns(&["hat_vY", "hat_vX", "hat_Y", "hat_X"]));
    c.extend(numbered("u", 4));
    c.extend(numbered("I", 4));
    c.extend(columns(&["Delta1", "Delta2", "intDelta2_1", "intDelta2_2"]));
    c.extend(numbered("err_lambda", 4));
    c.extend(columns(&["err_Y", "err_vY", "err_X", "err_vX"]));
    c.extend(numbered("err_theta", 4));
    c.extend(columns(&["ref_Y", "ref_X", "track_Y", "track_X"]));
    c.extend(numbered("psi", 4));
    c.extend(columns(&["z1", "z2", "z_residual1", "z_residual2", "pos_identity_Y", "pos_identity_X"]));
    c.extend(numbered("mix_residual", 4));
    c
}

struct RotorStage {
    plant: TwoDofState,
    current: [f64; 4],
    open_loop: [f64; 4],
    flux_estimate: [f64; 4],
    sample: TwoDofRegressionSample,
    axes: [AxisSignals; 2],
    speed: [f64; 2],
    position: [f64; 2],
    setpoint: [f64; 2],
    voltage: [f64; 4],
}

struct Rotor<'a> {
    cfg: &'a TwoDofConfig,
    drem: TwoDofDrem,
    speed: [SpeedObserver; 2],
    position: [PositionObserver; 2],
}

impl<'a> Rotor<'a> {
    fn new(cfg: &'a TwoDofConfig) -> Result<Self> {
        let o = &cfg.observers;
        let i = &cfg.initial;
        Ok(Self {
            cfg,
            drem: TwoDofDrem::new(&cfg.bank)?,
            speed: [
                SpeedObserver::new(Axis::Vertical, o.speed[0]),
                SpeedObserver::new(Axis::Horizontal, o.speed[1]),
            ],
            position: [
                PositionObserver::new(o.position[0], i.position_estimate[0]),
                PositionObserver::new(o.position[1], i.position_estimate[1]),
            ],
        })
    }

    fn p(&self) -> &PlantParams {
        &self.cfg.plant
    }

    /// Steps are sampled at the step midpoint so switch instants never fall on
    /// a rounding boundary; the circle is smooth and sampled at stage times.
    fn setpoint(&self, t_stage: f64, t_mid: f64) -> [f64; 2] {
        match &self.cfg.reference {
            RotorReference::Steps { vertical, horizontal } => [vertical.value_at(t_mid), horizontal.value_at(t_mid)],
            RotorReference::Circle { radius, angular_rate } => {
                let c = Circle {
                    radius: *radius,
                    angular_rate: *angular_rate,
                };
                [c.vertical(t_stage).value, c.horizontal(t_stage).value]
            }
        }
    }

    fn stage(&self, x: &[f64], offsets: &[f64; 4], t_stage: f64, t_mid: f64) -> RotorStage {
        let p = self.p();
        let diag = self.cfg.diagnostics;
        let plant = TwoDofState::read_from(&x[R_PLANT..R_PSI]);
        let current = currents_2dof(&plant, p);
        let open_loop: [f64; 4] = std::array::from_fn(|i| x[R_PSI + i]);
        let flux_estimate = if diag.true_flux {
            plant.flux
        } else {
            std::array::from_fn(|i| open_loop[i] + offsets[i])
        };
        let sample = build_regressors_2dof(&current, &open_loop, p);

        let mut axes = [Axis::Vertical, Axis::Horizontal].map(|a| AxisSignals::of_rotor(a, &flux_estimate, &[0.0; 4], &current));
        let speed: [f64; 2] = std::array::from_fn(|a| self.speed[a].estimate_for(x[R_SPEED + a], &axes[a], p));
        let position = [x[R_POS], x[R_POS + 1]];
        let setpoint = self.setpoint(t_stage, t_mid);

        let est = if diag.true_state {
            RotorEstimates {
                flux: plant.flux,
                vertical: plant.vertical,
                horizontal: plant.horizontal,
                vertical_speed: plant.vertical_speed,
                horizontal_speed: plant.horizontal_speed,
            }
        } else {
            RotorEstimates {
                flux: flux_estimate,
                vertical: position[0],
                horizontal: position[1],
                vertical_speed: speed[0],
                horizontal_speed: speed[1],
            }
        };
        let voltage = idapbc_control(&est, &current, setpoint, &self.cfg.controller, p);

        let flux_rate: [f64; 4] = std::array::from_fn(|i| voltage[i] - p.resistance * current[i]);
        for (a, axis) in axes.iter_mut().enumerate() {
            axis.flux_rate = [flux_rate[2 * a], flux_rate[2 * a + 1]];
        }

        RotorStage {
            plant,
            current,
            open_loop,
            flux_estimate,
            sample,
            axes,
            speed,
            position,
            setpoint,
            voltage,
        }
    }

    fn rate(&self, s: &RotorStage, x: &[f64], dx: &mut [f64]) {
        let p = self.p();
        derivatives_2dof(&s.plant, &s.voltage, p).write_to(&mut dx[R_PLANT..R_PSI]);
        for i in 0..4 {
            dx[R_PSI + i] = s.voltage[i] - p.resistance * s.current[i];
        }
        self.drem.rate(&x[R_BANK..R_SPEED], &s.sample, &mut dx[R_BANK..R_SPEED]);
        for a in 0..2 {
            dx[R_SPEED + a] = self.speed[a].rate(x[R_SPEED + a], &s.axes[a], p);
            dx[R_POS + a] = self.position[a].rate(x[R_POS + a], &s.axes[a], s.speed[a], p);
        }
    }

    fn extend(&self, x: &[f64], s: &RotorStage) -> [ExtendedRegressor<3>; 2] {
        self.drem.extend(&x[R_BANK..R_SPEED], &s.sample)
    }
}

/// Relative residual of `Σλ²·q = moment`, scaled by `c·Σλ²`.
fn position_identity(axis: &AxisSignals, position: f64, p: &PlantParams) -> f64 {
    let norm = axis.flux_norm_sq();
    if norm == 0.0 {
        return 0.0;
    }
    (norm * position - axis.position_moment(p)) / (p.nominal_gap * norm)
}

fn rotor_record(cfg: &TwoDofConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let (dt, _) = timing(&cfg.run)?;
    let mut rec = RunRecord::new(&cfg.name, System::TwoDof, dt, dt * cfg.run.record_every as f64, rotor_columns());
    rec.monotonicity = (1..=4).map(|i| MonotonicityTrace::new(format!("theta{i}"))).collect();
    Ok(rec)
}

pub fn run_two_dof(cfg: &TwoDofConfig) -> Result<RunRecord> {
    let mut rec = rotor_record(cfg)?;
    simulate_two_dof(cfg, &mut rec)?;
    Ok(rec)
}

fn simulate_two_dof(cfg: &TwoDofConfig, rec: &mut RunRecord) -> Result<()> {
    let (dt, steps) = timing(&cfg.run)?;
    let every = cfg.run.record_every;
    let p = cfg.plant;
    let rotor = Rotor::new(cfg)?;
    let init = &cfg.initial;

    let truth: [f64; 4] = std::array::from_fn(|i| init.plant.flux[i] - init.open_loop_flux[i]);
    let mut estimators = Vec::with_capacity(4);
    for i in 0..4 {
        estimators.push(GradientEstimator::new(
            init.flux_estimate[i] - init.open_loop_flux[i],
            cfg.estimator_gains[i],
        )?);
    }
    let mut offsets: [f64; 4] = std::array::from_fn(|i| estimators[i].estimate);

    let mut x = vec![0.0; R_DIM];
    init.plant.write_to(&mut x[R_PLANT..R_PSI]);
    x[R_PSI..R_BANK].copy_from_slice(&init.open_loop_flux);
    {
        let s0 = rotor.stage(&x, &offsets, 0.0, 0.5 * dt);
        for a in 0..2 {
            x[R_SPEED + a] = rotor.speed[a].initialized(init.speed_estimate[a], &s0.axes[a], &p).internal;
        }
        x[R_POS] = init.position_estimate[0];
        x[R_POS + 1] = init.position_estimate[1];
    }

    let mut monitors = [ExcitationMonitor::default(); 2];
    let mut domain = DomainWatch::new(cfg.run.abort_on_domain_violation);
    let mut rk = SubstepRk4::new(R_DIM, cfg.run.tolerance);
    let mut row = Vec::with_capacity(rec.columns.len());

    let mut stage = rotor.stage(&x, &offsets, 0.0, 0.5 * dt);
    let mut ext = rotor.extend(&x, &stage);

    for k in 0..=steps {
        let t = k as f64 * dt;
        if k % every == 0 {
            row.clear();
            rotor_row(&mut row, t, &stage, &ext, &offsets, &truth, &monitors, &p);
            check_finite("recorded sample", &row, t)?;
            rec.push_row(&row);
        }
        if k == 0 {
            // checked after recording so an abort at the start still leaves the initial sample
            domain.observe(0.0, stage.plant.in_domain(&p), || rotor_domain_detail(&stage.plant), &mut rec.events)?;
        }
        if k == steps {
            break;
        }

        let t_mid = t + 0.5 * dt;
        let held = offsets;
        rk.advance(t, dt, &mut x, |ts, xs, dx| {
            let s = rotor.stage(xs, &held, ts, t_mid);
            rotor.rate(&s, xs, dx);
        })?;
        let t_next = (k + 1) as f64 * dt;
        check_finite("plant state", &x[R_PLANT..R_PSI], t_next)?;
        check_finite("open-loop flux", &x[R_PSI..R_BANK], t_next)?;
        check_finite("regressor filter bank", &x[R_BANK..R_SPEED], t_next)?;
        check_finite("speed observer", &x[R_SPEED..R_POS], t_next)?;
        check_finite("position observer", &x[R_POS..R_DIM], t_next)?;

        let next_stage = rotor.stage(&x, &offsets, t_next, t_next + 0.5 * dt);
        let next_ext = rotor.extend(&x, &next_stage);
        for i in 0..4 {
            let (ch, j) = (i / 2, i % 2);
            let before = offsets[i] - truth[i];
            offsets[i] = estimators[i].step_between((ext[ch].det, ext[ch].mixed[j]), (next_ext[ch].det, next_ext[ch].mixed[j]), dt);
            rec.monotonicity[i].observe(t_next, before, offsets[i] - truth[i]);
        }
        check_finite("offset estimator", &offsets, t_next)?;
        for ch in 0..2 {
            monitors[ch].accumulate(ext[ch].det, next_ext[ch].det, dt);
        }
        // the stage is re-evaluated with the updated offsets for recording
        stage = rotor.stage(&x, &offsets, t_next, t_next + 0.5 * dt);
        ext = next_ext;
        domain.observe(t_next, stage.plant.in_domain(&p), || rotor_domain_detail(&stage.plant), &mut rec.events)?;
    }
    Ok(())
}

fn rotor_domain_detail(s: &TwoDofState) -> String {
    format!("Y = {:e} m, X = {:e} m", s.vertical, s.horizontal)
}

#[allow(clippy::too_many_arguments)]
fn rotor_row(
    row: &mut Vec<f64>,
    t: f64,
    s: &RotorStage,
    ext: &[ExtendedRegressor<3>; 2],
    offsets: &[f64; 4],
    truth: &[f64; 4],
    monitors: &[ExcitationMonitor; 2],
    p: &PlantParams,
) {
    let pl = &s.plant;
    let true_axes = [Axis::Vertical, Axis::Horizontal].map(|a| AxisSignals::of_rotor(a, &pl.flux, &[0.0; 4], &s.current));
    let predicted = s.sample.predicted_output(truth);

    row.push(t);
    row.extend(pl.flux);
    row.extend([pl.vertical, pl.vertical_speed, pl.horizontal, pl.horizontal_speed]);
    row.extend(s.flux_estimate);
    row.extend(offsets);
    row.extend([s.speed[0], s.speed[1], s.position[0], s.position[1]]);
    row.extend(s.voltage);
    row.extend(s.current);
    row.extend([ext[0].det, ext[1].det, monitors[0].integral, monitors[1].integral]);
    row.extend((0..4).map(|i| pl.flux[i] - s.flux_estimate[i]));
    row.extend([
        pl.vertical - s.position[0],
        pl.vertical_speed - s.speed[0],
        pl.horizontal - s.position[1],
        pl.horizontal_speed - s.speed[1],
    ]);
    row.extend((0..4).map(|i| truth[i] - offsets[i]));
    row.extend([s.setpoint[0], s.setpoint[1], pl.vertical - s.setpoint[0], pl.horizontal - s.setpoint[1]]);
    row.extend(s.open_loop);
    row.extend([
        s.sample.output[0],
        s.sample.output[1],
        s.sample.output[0] - predicted[0],
        s.sample.output[1] - predicted[1],
        position_identity(&true_axes[0], pl.vertical, p),
        position_identity(&true_axes[1], pl.horizontal, p),
    ]);
    row.extend((0..4).map(|i| {
        let (ch, j) = (i / 2, i % 2);
        ext[ch].mixed[j] - ext[ch].det * truth[i]
    }));
}

// ---------------------------------------------------------------------------
// 1-dof ball

const B_PLANT: usize = 0;
const B_PSI: usize = 3;
const B_PIPE: usize = 4;
const B_BANK: usize = B_PIPE + OneDofPebo::STATE_DIM;
const B_SPEED: usize = B_BANK + OneDofDrem::STATE_DIM;
const B_POS: usize = B_SPEED + 1;
const B_CHAIN: usize = B_POS + 1;
const B_DIM: usize = B_CHAIN + 4;

/// Column order of the ball CSV.
pub fn ball_columns() -> Vec<String> {
    columns(&[
        "t",
        "lambda",
        "Y",
        "vY",
        "hat_lambda",
        "hat_eta",
        "hat_vY",
        "hat_Y",
        "u",
        "i",
        "Delta",
        "intDelta2",
        "err_lambda",
        "err_Y",
        "err_vY",
        "err_eta",
        "ref_Y",
        "track_Y",
        "psi",
        "z",
        "c6",
        "reg_residual",
        "raw_residual",
        "pos_identity",
        "mix_residual",
        "force_floor",
    ])
}

struct BallStage {
    plant: OneDofState,
    current: f64,
    open_loop: f64,
    flux_estimate: f64,
    axis: AxisSignals,
    speed: f64,
    position: f64,
    reference: ReferenceState,
    voltage: f64,
    singular: bool,
}

impl BallStage {
    fn inputs(&self) -> PipelineInputs {
        PipelineInputs {
            current: self.current,
            voltage: self.voltage,
            open_loop_flux: self.open_loop,
        }
    }
}

struct Ball<'a> {
    cfg: &'a OneDofConfig,
    pebo: OneDofPebo,
    drem: OneDofDrem,
    speed: SpeedObserver,
    position: PositionObserver,
    chain: FilteredChain,
}

impl<'a> Ball<'a> {
    fn new(cfg: &'a OneDofConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            pebo: OneDofPebo::new(cfg.plant, cfg.pipeline.filter_rate, cfg.pipeline.washout_rate)?,
            drem: OneDofDrem::new(&cfg.bank)?,
            speed: SpeedObserver::new(Axis::Vertical, cfg.observers.speed),
            position: PositionObserver::new(cfg.observers.position, cfg.initial.position_estimate),
            chain: FilteredChain::new(cfg.reference.bandwidth, cfg.reference.source.clone())?,
        })
    }

    fn stage(&self, x: &[f64], offset: f64) -> BallStage {
        let p = &self.cfg.plant;
        let diag = self.cfg.diagnostics;
        let plant = OneDofState {
            flux: x[B_PLANT],
            position: x[B_PLANT + 1],
            speed: x[B_PLANT + 2],
        };
        let current = current_1dof(&plant, p);
        let open_loop = x[B_PSI];
        let flux_estimate = if diag.true_flux { plant.flux } else { open_loop + offset };
        let mut axis = AxisSignals::single(flux_estimate, 0.0, current);
        let speed = self.speed.estimate_for(x[B_SPEED], &axis, p);
        let position = x[B_POS];
        let reference = self.chain.reference_for(&x[B_CHAIN..B_DIM]);
        let out = if diag.true_state {
            flc_control(plant.flux, plant.position, plant.speed, &reference, &self.cfg.controller, p)
        } else {
            flc_control(flux_estimate, position, speed, &reference, &self.cfg.controller, p)
        };
        axis.flux_rate[0] = out.voltage - p.resistance * current;
        BallStage {
            plant,
            current,
            open_loop,
            flux_estimate,
            axis,
            speed,
            position,
            reference,
            voltage: out.voltage,
            singular: out.singular,
        }
    }

    fn sample(&self, x: &[f64], s: &BallStage) -> Result<OneDofRegressionSample> {
        self.pebo.sample(&x[B_PIPE..B_BANK], &s.inputs())
    }

    fn rate(&self, t: f64, s: &BallStage, x: &[f64], dx: &mut [f64]) {
        let p = &self.cfg.plant;
        let d = derivatives_1dof(&s.plant, s.voltage, p);
        dx[B_PLANT] = d.flux;
        dx[B_PLANT + 1] = d.position;
        dx[B_PLANT + 2] = d.speed;
        dx[B_PSI] = s.voltage - p.resistance * s.current;
        let inputs = s.inputs();
        self.pebo.rate(&x[B_PIPE..B_BANK], &inputs, &mut dx[B_PIPE..B_BANK]);
        // a non-finite sample propagates into the state and is reported after the step
        let sample = self.sample(x, s).unwrap_or(OneDofRegressionSample {
            output: f64::NAN,
            regressor: [f64::NAN; 5],
            sixth_power_coeff: f64::NAN,
        });
        self.drem.rate(&x[B_BANK..B_SPEED], &sample, &mut dx[B_BANK..B_SPEED]);
        dx[B_SPEED] = self.speed.rate(x[B_SPEED], &s.axis, p);
        dx[B_POS] = self.position.rate(x[B_POS], &s.axis, s.speed, p);
        self.chain.rate(&x[B_CHAIN..B_DIM], t, &mut dx[B_CHAIN..B_DIM]);
    }

    fn extend(&self, x: &[f64], s: &BallStage, t: f64) -> Result<(ExtendedRegressor<5>, OneDofRegressionSample)> {
        let sample = self.sample(x, s).map_err(|e| match e {
            Error::NonFinite { stage, .. } => Error::NonFinite { stage, t: Some(t) },
            other => other,
        })?;
        Ok((self.drem.extend(&x[B_BANK..B_SPEED], &sample), sample))
    }
}

fn ball_record(cfg: &OneDofConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let (dt, _) = timing(&cfg.run)?;
    let mut rec = RunRecord::new(&cfg.name, System::OneDof, dt, dt * cfg.run.record_every as f64, ball_columns());
    rec.monotonicity = vec![MonotonicityTrace::new("eta")];
    Ok(rec)
}

pub fn run_one_dof(cfg: &OneDofConfig) -> Result<RunRecord> {
    let mut rec = ball_record(cfg)?;
    simulate_one_dof(cfg, &mut rec)?;
    Ok(rec)
}

fn simulate_one_dof(cfg: &OneDofConfig, rec: &mut RunRecord) -> Result<()> {
    let (dt, steps) = timing(&cfg.run)?;
    let every = cfg.run.record_every;
    let p = cfg.plant;
    let ball = Ball::new(cfg)?;
    let init = &cfg.initial;

    let truth = init.plant.flux - init.open_loop_flux;
    let mut estimator = GradientEstimator::new(init.offset_estimate, cfg.estimator_gain)?;
    let mut offset = estimator.estimate;

    let mut x = vec![0.0; B_DIM];
    x[B_PLANT] = init.plant.flux;
    x[B_PLANT + 1] = init.plant.position;
    x[B_PLANT + 2] = init.plant.speed;
    x[B_PSI] = init.open_loop_flux;
    let i0 = current_1dof(&init.plant, &p);
    x[B_PIPE..B_BANK].copy_from_slice(&ball.pebo.initial_state(i0));
    {
        let s0 = ball.stage(&x, offset);
        x[B_SPEED] = ball.speed.initialized(init.speed_estimate, &s0.axis, &p).internal;
        x[B_POS] = init.position_estimate;
    }

    let mut monitor = ExcitationMonitor::default();
    let mut domain = DomainWatch::new(cfg.run.abort_on_domain_violation);
    let mut rk = SubstepRk4::new(B_DIM, cfg.run.tolerance);
    let mut row = Vec::with_capacity(rec.columns.len());

    let mut stage = ball.stage(&x, offset);
    let (mut ext, mut sample) = ball.extend(&x, &stage, 0.0)?;
    let mut floor_engaged = false;
    track_force_floor(0.0, stage.singular, &mut floor_engaged, &mut rec.events);

    for k in 0..=steps {
        let t = k as f64 * dt;
        if k % every == 0 {
            row.clear();
            ball_row(&mut row, t, &ball, &x, &stage, &ext, &sample, offset, truth, &monitor);
            check_finite("recorded sample", &row, t)?;
            rec.push_row(&row);
        }
        if k == 0 {
            domain.observe(0.0, stage.plant.in_domain(&p), || ball_domain_detail(&stage.plant), &mut rec.events)?;
        }
        if k == steps {
            break;
        }

        let held = offset;
        rk.advance(t, dt, &mut x, |ts, xs, dx| {
            let s = ball.stage(xs, held);
            ball.rate(ts, &s, xs, dx);
        })?;
        let t_next = (k + 1) as f64 * dt;
        check_finite("plant state", &x[B_PLANT..B_PSI], t_next)?;
        check_finite("open-loop flux", &x[B_PSI..B_PIPE], t_next)?;
        check_finite("regression pipeline", &x[B_PIPE..B_BANK], t_next)?;
        check_finite("regressor filter bank", &x[B_BANK..B_SPEED], t_next)?;
        check_finite("speed observer", &x[B_SPEED..B_POS], t_next)?;
        check_finite("position observer", &x[B_POS..B_CHAIN], t_next)?;
        check_finite("reference chain", &x[B_CHAIN..B_DIM], t_next)?;

        let next_stage = ball.stage(&x, offset);
        let (next_ext, next_sample) = ball.extend(&x, &next_stage, t_next)?;
        let before = offset - truth;
        offset = estimator.step_between((ext.det, ext.mixed[0]), (next_ext.det, next_ext.mixed[0]), dt);
        check_finite("offset estimator", &[offset], t_next)?;
        rec.monotonicity[0].observe(t_next, before, offset - truth);
        monitor.accumulate(ext.det, next_ext.det, dt);

        stage = ball.stage(&x, offset);
        ext = next_ext;
        sample = next_sample;
        domain.observe(t_next, stage.plant.in_domain(&p), || ball_domain_detail(&stage.plant), &mut rec.events)?;
        track_force_floor(t_next, stage.singular, &mut floor_engaged, &mut rec.events);
    }
    Ok(())
}

fn ball_domain_detail(s: &OneDofState) -> String {
    format!("Y = {:e} m", s.position)
}

fn track_force_floor(t: f64, singular: bool, engaged: &mut bool, events: &mut Vec<Event>) {
    if singular == *engaged {
        return;
    }
    *engaged = singular;
    events.push(Event {
        t,
        kind: if singular {
            EventKind::ForceFloorEngaged
        } else {
            EventKind::ForceFloorReleased
        },
        detail: "estimated force at the floor of the linearizing law".into(),
    });
}

#[allow(clippy::too_many_arguments)]
fn ball_row(
    row: &mut Vec<f64>,
    t: f64,
    ball: &Ball,
    x: &[f64],
    s: &BallStage,
    ext: &ExtendedRegressor<5>,
    sample: &OneDofRegressionSample,
    offset: f64,
    truth: f64,
    monitor: &ExcitationMonitor,
) {
    let pl = &s.plant;
    let p = &ball.cfg.plant;
    let signals = ball.pebo.signals(&x[B_PIPE..B_BANK], &s.inputs());
    let reg_residual = sample.output
        - sample
            .regressor
            .iter()
            .enumerate()
            .map(|(i, phi)| phi * truth.powi(i as i32 + 1))
            .sum::<f64>();
    let true_axis = AxisSignals::single(pl.flux, 0.0, s.current);
    row.extend([
        t,
        pl.flux,
        pl.position,
        pl.speed,
        s.flux_estimate,
        offset,
        s.speed,
        s.position,
        s.voltage,
        s.current,
        ext.det,
        monitor.integral,
        pl.flux - s.flux_estimate,
        pl.position - s.position,
        pl.speed - s.speed,
        truth - offset,
        s.reference.value,
        pl.position - s.reference.value,
        s.open_loop,
        sample.output,
        sample.sixth_power_coeff,
        reg_residual,
        signals.residual.eval(truth),
        position_identity(&true_axis, pl.position, p),
        ext.mixed[0] - ext.det * truth,
        if s.singular { 1.0 } else { 0.0 },
    ]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;

    #[test]
    fn empty_horizon_records_only_the_initial_sample() {
        let mut c = presets::rotor_steps();
        c.run.horizon = 0.0;
        let rec = run_two_dof(&c).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.col("t"), &[0.0]);
        assert_eq!(rec.col("lambda1")[0], 0.5);
        assert_eq!(rec.col("hat_lambda2")[0], 0.5);

        let mut b = presets::ball_sines();
        b.run.horizon = 0.0;
        let rec = run_one_dof(&b).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.col("hat_eta")[0], 1e-4);
        assert_eq!(rec.col("hat_vY")[0], 0.0);
    }

    #[test]
    fn sample_count_follows_decimation() {
        let mut c = presets::rotor_steps();
        c.run.horizon = 0.0105;
        c.run.record_every = 10;
        let rec = run_two_dof(&c).unwrap();
        // 105 steps -> samples at steps 0, 10, ..., 100
        assert_eq!(rec.len(), 11);
        assert!(rec.data.iter().all(|col| col.len() == rec.len()));
    }

    #[test]
    fn initial_observer_outputs_match_configuration() {
        let mut c = presets::rotor_steps();
        c.initial = presets::rotor_case(2);
        c.run.horizon = 0.0;
        let rec = run_two_dof(&c).unwrap();
        assert!((rec.col("hat_vY")[0] + 0.01).abs() < 1e-15);
        assert!((rec.col("hat_vX")[0] - 0.04).abs() < 1e-15);
        assert_eq!(rec.col("hat_X")[0], 0.02);
    }

    #[test]
    fn invalid_config_is_rejected_before_running() {
        let mut c = presets::rotor_steps();
        c.controller.shaping_lower = 1.0;
        assert!(matches!(run_two_dof(&c), Err(Error::Validation { .. })));
    }

    #[test]
    fn domain_abort_is_an_error() {
        let mut c = presets::ball_sines();
        c.run.horizon = 0.001;
        c.run.abort_on_domain_violation = true;
        assert!(matches!(run_one_dof(&c), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn tolerance_must_be_positive() {
        let mut c = presets::ball_steps();
        for bad in [0.0, -1e-9, f64::NAN] {
            c.run.tolerance = Some(bad);
            assert!(matches!(run_one_dof(&c), Err(Error::Validation { .. })), "{bad}");
        }
    }

    #[test]
    fn collapsing_step_is_reported_with_its_time() {
        let mut c = presets::ball_sines();
        c.run.horizon = 1.0;
        match run_one_dof(&c) {
            Err(Error::StepCollapse { t }) => assert!(t > 0.5 && t < 1.0, "{t}"),
            other => panic!("expected a collapsed step, got {other:?}"),
        }
    }
}
