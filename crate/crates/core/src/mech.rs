//! Speed and position observers driven by flux, flux rate and coil currents.
//!
//! One axis of the rotor carries two opposing coils. The observers use only
//! `λ`, the known flux rate `λ̇ = −R·I + U` and the measured `I`; no current
//! derivative appears anywhere. The 1-dof rig is the one-coil case of the
//! vertical axis.

use crate::plant::PlantParams;
use crate::signals::rk4_scalar;

/// Which way gravity acts on an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Vertical,
    Horizontal,
}

impl Axis {
    fn gravity(self, p: &PlantParams) -> f64 {
        match self {
            Axis::Vertical => p.gravity,
            Axis::Horizontal => 0.0,
        }
    }
}

/// Signals of the two coils of one axis; index 0 is the coil the rotor moves
/// away from as the coordinate grows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisSignals {
    pub flux: [f64; 2],
    pub flux_rate: [f64; 2],
    pub current: [f64; 2],
}

impl AxisSignals {
    /// Vertical pair (coils 1–2) or horizontal pair (coils 3–4) of the rotor.
    pub fn of_rotor(axis: Axis, flux: &[f64; 4], flux_rate: &[f64; 4], current: &[f64; 4]) -> Self {
        let o = match axis {
            Axis::Vertical => 0,
            Axis::Horizontal => 2,
        };
        Self {
            flux: [flux[o], flux[o + 1]],
            flux_rate: [flux_rate[o], flux_rate[o + 1]],
            current: [current[o], current[o + 1]],
        }
    }

    /// The ball rig as a one-coil axis.
    pub fn single(flux: f64, flux_rate: f64, current: f64) -> Self {
        Self {
            flux: [flux, 0.0],
            flux_rate: [flux_rate, 0.0],
            current: [current, 0.0],
        }
    }

    pub fn flux_norm_sq(&self) -> f64 {
        self.flux[0] * self.flux[0] + self.flux[1] * self.flux[1]
    }

    /// `k·(I₁λ₁ − I₂λ₂)`; its derivative carries the unmeasured speed.
    fn energy_imbalance(&self, p: &PlantParams) -> f64 {
        p.flux_constant * (self.current[0] * self.flux[0] - self.current[1] * self.flux[1])
    }

    /// Position times squared flux norm, computed from fluxes and currents alone:
    /// `(kI₂ − cλ₂)λ₂ − (kI₁ − cλ₁)λ₁`.
    pub fn position_moment(&self, p: &PlantParams) -> f64 {
        let (k, c) = (p.flux_constant, p.nominal_gap);
        (k * self.current[1] - c * self.flux[1]) * self.flux[1] - (k * self.current[0] - c * self.flux[0]) * self.flux[0]
    }
}

/// Immersion-type speed observer of one axis: `v̂ = internal − γ·k(I₁λ₁ − I₂λ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedObserver {
    pub axis: Axis,
    pub gain: f64,
    pub internal: f64,
}

impl SpeedObserver {
    pub fn new(axis: Axis, gain: f64) -> Self {
        assert!(gain > 0.0, "speed observer gain must be positive");
        Self {
            axis,
            gain,
            internal: 0.0,
        }
    }

    /// Set the internal state so the current output equals `speed`.
    pub fn initialized(mut self, speed: f64, s: &AxisSignals, p: &PlantParams) -> Self {
        self.internal = speed + self.gain * s.energy_imbalance(p);
        self
    }

    pub fn estimate_for(&self, internal: f64, s: &AxisSignals, p: &PlantParams) -> f64 {
        internal - self.gain * s.energy_imbalance(p)
    }

    pub fn estimate(&self, s: &AxisSignals, p: &PlantParams) -> f64 {
        self.estimate_for(self.internal, s, p)
    }

    pub fn rate(&self, internal: f64, s: &AxisSignals, p: &PlantParams) -> f64 {
        let (k, m) = (p.flux_constant, p.mass);
        let speed = self.estimate_for(internal, s, p);
        let power = s.current[0] * s.flux_rate[0] - s.current[1] * s.flux_rate[1];
        let accel = (s.flux[0] * s.flux[0] - s.flux[1] * s.flux[1] - 2.0 * k * m * self.axis.gravity(p)) / (2.0 * k * m);
        -self.gain * (s.flux_norm_sq() * speed - 2.0 * k * power) + accel
    }

    /// One RK4 step with the axis signals held over the step; returns the new estimate.
    pub fn step(&mut self, s: &AxisSignals, p: &PlantParams, dt: f64) -> f64 {
        let this = *self;
        self.internal = rk4_scalar(self.internal, dt, |x| this.rate(x, s, p));
        self.estimate(s, p)
    }
}

/// Position observer of one axis, driven by the paired speed estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionObserver {
    pub gain: f64,
    pub estimate: f64,
}

impl PositionObserver {
    pub fn new(gain: f64, initial: f64) -> Self {
        assert!(gain > 0.0, "position observer gain must be positive");
        Self {
            gain,
            estimate: initial,
        }
    }

    pub fn rate(&self, estimate: f64, s: &AxisSignals, speed_estimate: f64, p: &PlantParams) -> f64 {
        -self.gain * (s.flux_norm_sq() * estimate - s.position_moment(p)) + speed_estimate
    }

    pub fn step(&mut self, s: &AxisSignals, speed_estimate: f64, p: &PlantParams, dt: f64) -> f64 {
        let this = *self;
        self.estimate = rk4_scalar(self.estimate, dt, |x| this.rate(x, s, speed_estimate, p));
        self.estimate
    }
}

/// Rate of the 1-dof speed observer written out for the single coil.
pub fn speed_rate_1dof(gain: f64, speed_estimate: f64, flux: f64, flux_rate: f64, current: f64, p: &PlantParams) -> f64 {
    let (k, m) = (p.flux_constant, p.mass);
    (flux * flux / (2.0 * k) - m * p.gravity) / m - gain * flux * flux * speed_estimate + 2.0 * gain * k * current * flux_rate
}

/// Rate of the 1-dof position observer written out for the single coil.
pub fn position_rate_1dof(gain: f64, estimate: f64, flux: f64, current: f64, speed_estimate: f64, p: &PlantParams) -> f64 {
    -gain * flux * flux * estimate + gain * (p.nominal_gap * flux - p.flux_constant * current) * flux + speed_estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{coil_current, currents_2dof, derivatives_2dof, TwoDofState};
    use crate::signals::Rk4;

    fn rotor() -> PlantParams {
        PlantParams::two_dof_rig()
    }

    /// Falling rotor with both vertical fluxes frozen at 1.
    fn frozen_axis(p: &PlantParams, y: f64) -> AxisSignals {
        let k = p.flux_constant;
        AxisSignals {
            flux: [1.0, 1.0],
            flux_rate: [0.0, 0.0],
            current: [coil_current(1.0, p.nominal_gap - y, k), coil_current(1.0, p.nominal_gap + y, k)],
        }
    }

    #[test]
    fn exact_start_stays_exact() {
        let p = rotor();
        let obs = SpeedObserver::new(Axis::Vertical, 2000.0);
        // x = [Y, vY, internal]
        let mut x = [0.0, 0.3, 0.0];
        x[2] = obs.initialized(0.3, &frozen_axis(&p, 0.0), &p).internal;
        let mut rk = Rk4::new(3);
        for k in 0..1000 {
            rk.step(k as f64 * 1e-5, 1e-5, &mut x, |_, s, d| {
                let a = frozen_axis(&p, s[0]);
                d[0] = s[1];
                d[1] = -p.gravity;
                d[2] = obs.rate(s[2], &a, &p);
            });
            let err = x[1] - obs.estimate_for(x[2], &frozen_axis(&p, x[0]), &p);
            assert!(err.abs() < 1e-9, "{err}");
        }
    }

    #[test]
    fn frozen_flux_speed_error_decays_at_twice_gain() {
        let p = rotor();
        let gain = 10.0;
        let obs = SpeedObserver::new(Axis::Vertical, gain);
        let mut x = [0.0, 0.3, 0.0];
        x[2] = obs.initialized(0.0, &frozen_axis(&p, 0.0), &p).internal;
        let err0 = 0.3;
        let dt = 1e-4;
        let mut rk = Rk4::new(3);
        for n in 1..=3000 {
            rk.step((n - 1) as f64 * dt, dt, &mut x, |_, s, d| {
                let a = frozen_axis(&p, s[0]);
                d[0] = s[1];
                d[1] = -p.gravity;
                d[2] = obs.rate(s[2], &a, &p);
            });
            let err = x[1] - obs.estimate_for(x[2], &frozen_axis(&p, x[0]), &p);
            let expect = err0 * (-2.0 * gain * n as f64 * dt).exp();
            assert!((err - expect).abs() <= 1e-6 * expect, "{err} vs {expect}");
        }
    }

    #[test]
    fn one_dof_rate_matches_single_coil_axis() {
        let p = PlantParams::one_dof_rig();
        let obs = SpeedObserver::new(Axis::Vertical, 37.0);
        let s = AxisSignals::single(0.8, -0.3, 0.004);
        let internal = 1.7;
        let v = obs.estimate_for(internal, &s, &p);
        assert!((v - (internal - 37.0 * p.flux_constant * 0.004 * 0.8)).abs() < 1e-15);
        let direct = speed_rate_1dof(37.0, v, 0.8, -0.3, 0.004, &p);
        assert!((obs.rate(internal, &s, &p) - direct).abs() <= 1e-12 * direct.abs());

        let pos = PositionObserver::new(5.0, 0.01);
        let direct = position_rate_1dof(5.0, 0.01, 0.8, 0.004, 0.2, &p);
        assert!((pos.rate(0.01, &s, 0.2, &p) - direct).abs() <= 1e-14);
    }

    #[test]
    fn frozen_single_coil_speed_error_decays_at_gain() {
        let p = PlantParams::one_dof_rig();
        let gain = 7.0;
        let obs = SpeedObserver::new(Axis::Vertical, gain);
        let k = p.flux_constant;
        let axis = |y: f64| AxisSignals::single(1.0, 0.0, coil_current(1.0, p.nominal_gap - y, k));
        let mut x = [0.0, -0.2, 0.0];
        x[2] = obs.initialized(0.0, &axis(0.0), &p).internal;
        let mut rk = Rk4::new(3);
        let dt = 1e-4;
        let accel = 1.0 / (2.0 * k * p.mass) - p.gravity;
        for n in 1..=4000 {
            rk.step(0.0, dt, &mut x, |_, s, d| {
                d[0] = s[1];
                d[1] = accel;
                d[2] = obs.rate(s[2], &axis(s[0]), &p);
            });
            let err = x[1] - obs.estimate_for(x[2], &axis(x[0]), &p);
            let expect = -0.2 * (-gain * n as f64 * dt).exp();
            assert!((err - expect).abs() <= 1e-6 * expect.abs());
        }
    }

    #[test]
    fn position_moment_identity() {
        let p = rotor();
        let s = TwoDofState {
            flux: [0.5, 0.6, 0.7, 0.2],
            vertical: 0.0013,
            horizontal: -0.0007,
            ..Default::default()
        };
        let i = currents_2dof(&s, &p);
        let zero = [0.0; 4];
        let v = AxisSignals::of_rotor(Axis::Vertical, &s.flux, &zero, &i);
        let h = AxisSignals::of_rotor(Axis::Horizontal, &s.flux, &zero, &i);
        let lhs_v = v.flux_norm_sq() * s.vertical;
        let lhs_h = h.flux_norm_sq() * s.horizontal;
        assert!((lhs_v - v.position_moment(&p)).abs() <= 1e-12 * lhs_v.abs());
        assert!((lhs_h - h.position_moment(&p)).abs() <= 1e-12 * lhs_h.abs());
    }

    #[test]
    fn frozen_flux_position_error_decays_at_twice_gain() {
        let p = rotor();
        let gain = 20.0;
        let obs = PositionObserver::new(gain, 0.0);
        // x = [Y, Ŷ]; Y moves at constant speed, the observer gets the true speed
        let speed = 0.01;
        let mut x = [0.001, 0.0];
        let mut rk = Rk4::new(2);
        let dt = 1e-4;
        for n in 1..=2000 {
            rk.step(0.0, dt, &mut x, |_, s, d| {
                d[0] = speed;
                d[1] = obs.rate(s[1], &frozen_axis(&p, s[0]), speed, &p);
            });
            let expect = 0.001 * (-2.0 * gain * n as f64 * dt).exp();
            assert!(((x[0] - x[1]) - expect).abs() <= 1e-8 * expect);
        }
    }

    #[test]
    fn exact_position_start_stays_exact() {
        let p = rotor();
        let obs = PositionObserver::new(2000.0, 0.0);
        let mut x = [0.0, 0.05, 0.0, 0.0];
        let mut rk = Rk4::new(4);
        // [Y, vY, Ŷ, unused] with a fixed flux pair holding the rotor
        for _ in 0..500 {
            rk.step(0.0, 1e-5, &mut x, |_, s, d| {
                let a = frozen_axis(&p, s[0]);
                d[0] = s[1];
                d[1] = -p.gravity;
                d[2] = obs.rate(s[2], &a, s[1], &p);
                d[3] = 0.0;
            });
            assert!((x[0] - x[2]).abs() < 1e-12, "{}", x[0] - x[2]);
        }
    }

    #[test]
    fn quadrature_law_on_free_rotor() {
        // fluxes evolve under zero voltage, observer fed true flux and flux rate
        let p = PlantParams {
            flux_constant: 1.0,
            ..rotor()
        };
        let gain = 50.0;
        let obs = SpeedObserver::new(Axis::Vertical, gain);
        let start = TwoDofState {
            flux: [1.3, 0.4, 0.5, 0.5],
            ..Default::default()
        };
        let axis_of = |s: &TwoDofState| {
            let i = currents_2dof(s, &p);
            let rate: [f64; 4] = std::array::from_fn(|j| -p.resistance * i[j]);
            AxisSignals::of_rotor(Axis::Vertical, &s.flux, &rate, &i)
        };
        // x = [plant(8), internal, ∫Σλ²]
        let mut x = [0.0; 10];
        start.write_to(&mut x);
        x[8] = obs.initialized(0.1, &axis_of(&start), &p).internal;
        let err0 = -obs.estimate_for(x[8], &axis_of(&start), &p);
        let mut rk = Rk4::new(10);
        for _ in 0..1000 {
            rk.step(0.0, 1e-4, &mut x, |_, s, d| {
                let st = TwoDofState::read_from(s);
                derivatives_2dof(&st, &[0.0; 4], &p).write_to(d);
                let a = axis_of(&st);
                d[8] = obs.rate(s[8], &a, &p);
                d[9] = a.flux_norm_sq();
            });
        }
        let st = TwoDofState::read_from(&x);
        let err = st.vertical_speed - obs.estimate_for(x[8], &axis_of(&st), &p);
        let expect = err0 * (-gain * x[9]).exp();
        assert!((err - expect).abs() <= 1e-6 * expect.abs(), "{err} vs {expect}");
    }
}
