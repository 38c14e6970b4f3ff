//! First-order LTI building blocks and the fixed-step integrator shared by
//! every other module.
//!
//! Every continuous-time block in the crate can be used in two ways:
//!
//! * standalone, through a `step` method that advances the block by one
//!   classical RK4 step with its input held constant over the step;
//! * as part of a larger system, through a `rate`/`derivative` function that
//!   the scenario runner evaluates at every RK4 stage of one joint state
//!   vector.
//!
//! The second form is what makes the filtered identities of the observers hold
//! to integrator accuracy instead of to zero-order-hold accuracy.

use crate::error::{Error, Result};

/// Classical fourth-order Runge-Kutta stepper over a flat state vector.
///
/// Scratch buffers are allocated once, so stepping does not allocate.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    probe: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            probe: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Advance `x` from `t` to `t + dt` for `dx/dt = f(t, x)`.
    pub fn step<F>(&mut self, t: f64, dt: f64, x: &mut [f64], mut f: F)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        debug_assert_eq!(x.len(), self.dim());
        let half = 0.5 * dt;

        f(t, x, &mut self.k1);
        for i in 0..x.len() {
            self.probe[i] = x[i] + half * self.k1[i];
        }
        f(t + half, &self.probe, &mut self.k2);
        for i in 0..x.len() {
            self.probe[i] = x[i] + half * self.k2[i];
        }
        f(t + half, &self.probe, &mut self.k3);
        for i in 0..x.len() {
            self.probe[i] = x[i] + dt * self.k3[i];
        }
        f(t + dt, &self.probe, &mut self.k4);

        let sixth = dt / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// RK4 with optional step-doubling error control inside each outer step.
///
/// Without a tolerance, [`SubstepRk4::advance`] is exactly one RK4 step. With a
/// tolerance, the outer step is covered by as many RK4 substeps as needed to keep
/// the local error of every state below `tolerance·(1 + |x|)`. Outer steps stay
/// the unit for recording and for anything updated between steps.
#[derive(Debug, Clone)]
pub struct SubstepRk4 {
    rk: Rk4,
    tolerance: Option<f64>,
    /// Substep carried over from the previous outer step.
    suggested: f64,
    coarse: Vec<f64>,
    fine: Vec<f64>,
}

impl SubstepRk4 {
    /// Error control asking for a substep shorter than this fraction of the outer step fails.
    pub const MIN_FRACTION: f64 = 1e-12;
    pub const MAX_SUBSTEPS: usize = 10_000;

    pub fn new(dim: usize, tolerance: Option<f64>) -> Self {
        Self {
            rk: Rk4::new(dim),
            tolerance,
            suggested: f64::INFINITY,
            coarse: vec![0.0; dim],
            fine: vec![0.0; dim],
        }
    }

    /// Advance `x` from `t` to `t + dt`; returns the number of accepted substeps.
    ///
    /// Fails when the error control asks for a substep below
    /// [`Self::MIN_FRACTION`] of `dt` or needs more than [`Self::MAX_SUBSTEPS`].
    pub fn advance<F>(&mut self, t: f64, dt: f64, x: &mut [f64], mut f: F) -> Result<usize>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let Some(tol) = self.tolerance else {
            self.rk.step(t, dt, x, f);
            return Ok(1);
        };
        let end = t + dt;
        let min_h = dt * Self::MIN_FRACTION;
        let mut now = t;
        let mut h = self.suggested.min(dt);
        let mut accepted = 0;
        while now < end {
            if h < min_h || accepted >= Self::MAX_SUBSTEPS {
                return Err(Error::StepCollapse { t: now });
            }
            let last = h >= end - now;
            let step = if last { end - now } else { h };
            self.coarse.copy_from_slice(x);
            self.rk.step(now, step, &mut self.coarse, &mut f);
            self.fine.copy_from_slice(x);
            self.rk.step(now, 0.5 * step, &mut self.fine, &mut f);
            self.rk.step(now + 0.5 * step, 0.5 * step, &mut self.fine, &mut f);

            // Richardson estimate of the local error of the two half steps
            let err = self
                .coarse
                .iter()
                .zip(&self.fine)
                .map(|(c, f)| (f - c).abs() / (15.0 * tol * (1.0 + f.abs())))
                .fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
            let factor = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-0.2)).clamp(0.1, 4.0) };
            if err <= 1.0 {
                x.copy_from_slice(&self.fine);
                accepted += 1;
                if last {
                    // a short closing step says nothing about the next one
                    h = h.max(step * factor);
                    now = end;
                } else {
                    h = step * factor;
                    now += step;
                }
            } else {
                h = step * factor;
            }
        }
        self.suggested = h;
        Ok(accepted)
    }
}

/// One RK4 step of a scalar ODE `dx/dt = f(x)` (autonomous over the step).
pub fn rk4_scalar(x: f64, dt: f64, f: impl Fn(f64) -> f64) -> f64 {
    let k1 = f(x);
    let k2 = f(x + 0.5 * dt * k1);
    let k3 = f(x + 0.5 * dt * k2);
    let k4 = f(x + dt * k3);
    x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Fixed-step integration settings for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub dt: f64,
}

impl IntegratorSpec {
    pub const DEFAULT_DT: f64 = 1e-4;

    pub fn new(dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::validation("dt", format!("must be a positive number, got {dt}")));
        }
        Ok(Self { dt })
    }

    /// Number of whole steps needed to cover `horizon`.
    pub fn steps_for(&self, horizon: f64) -> usize {
        let n = horizon / self.dt;
        // tolerate representation error in horizons that are whole multiples of dt
        (n + 1e-9 * n.max(1.0)).floor() as usize
    }
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            dt: Self::DEFAULT_DT,
        }
    }
}

fn check_input(value: f64, signal: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::non_finite(signal, None))
    }
}

/// The operator `gain / (p + pole)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFilter {
    pub gain: f64,
    pub pole: f64,
    pub state: f64,
}

impl FirstOrderFilter {
    /// Panics if `pole` is not strictly positive.
    pub fn new(gain: f64, pole: f64) -> Self {
        Self::try_new(gain, pole).expect("first-order filter needs a positive pole")
    }

    pub fn try_new(gain: f64, pole: f64) -> Result<Self> {
        if !(pole.is_finite() && pole > 0.0) {
            return Err(Error::validation("pole", format!("must be positive, got {pole}")));
        }
        if !gain.is_finite() {
            return Err(Error::validation("gain", "must be finite"));
        }
        Ok(Self {
            gain,
            pole,
            state: 0.0,
        })
    }

    /// `W(p) = μ/(p+μ)`, unit DC gain.
    pub fn unit_lowpass(mu: f64) -> Self {
        Self::new(mu, mu)
    }

    pub fn with_state(mut self, state: f64) -> Self {
        self.state = state;
        self
    }

    #[inline]
    pub fn rate(gain: f64, pole: f64, state: f64, input: f64) -> f64 {
        -pole * state + gain * input
    }

    #[inline]
    pub fn derivative(&self, state: f64, input: f64) -> f64 {
        Self::rate(self.gain, self.pole, state, input)
    }

    pub fn dc_gain(&self) -> f64 {
        self.gain / self.pole
    }

    pub fn output(&self) -> f64 {
        self.state
    }

    /// Advance one RK4 step with `input` held over the step; returns the new state.
    pub fn step(&mut self, input: f64, dt: f64) -> Result<f64> {
        check_input(input, "first-order filter input")?;
        let (gain, pole) = (self.gain, self.pole);
        self.state = rk4_scalar(self.state, dt, |s| Self::rate(gain, pole, s, input));
        Ok(self.state)
    }
}

/// The realizable differentiator `μp/(p+μ)`, built as `μ·(input − W[input])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirtyDerivative {
    pub gain: f64,
    pub lowpass_state: f64,
}

impl DirtyDerivative {
    pub fn new(gain: f64) -> Self {
        assert!(gain > 0.0, "dirty derivative needs a positive bandwidth");
        Self {
            gain,
            lowpass_state: 0.0,
        }
    }

    /// Start with the low-pass settled on `initial_input`, so the output starts at
    /// zero and equals `W[dy/dt]` of the zero-initialised operator exactly.
    pub fn seeded(gain: f64, initial_input: f64) -> Self {
        Self {
            lowpass_state: initial_input,
            ..Self::new(gain)
        }
    }

    #[inline]
    pub fn output_for(&self, lowpass_state: f64, input: f64) -> f64 {
        self.gain * (input - lowpass_state)
    }

    #[inline]
    pub fn derivative(&self, lowpass_state: f64, input: f64) -> f64 {
        self.gain * (input - lowpass_state)
    }

    pub fn step(&mut self, input: f64, dt: f64) -> Result<f64> {
        check_input(input, "dirty-derivative input")?;
        let mu = self.gain;
        self.lowpass_state = rk4_scalar(self.lowpass_state, dt, |s| mu * (input - s));
        Ok(self.output_for(self.lowpass_state, input))
    }
}

/// The washout `ρp/(p+ρ)`: passes transients, removes constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Washout {
    pub gain: f64,
    pub lowpass_state: f64,
}

impl Washout {
    pub fn new(gain: f64) -> Self {
        assert!(gain > 0.0, "washout needs a positive corner");
        Self {
            gain,
            lowpass_state: 0.0,
        }
    }

    #[inline]
    pub fn output_for(lowpass_state: f64, input: f64) -> f64 {
        input - lowpass_state
    }

    #[inline]
    pub fn derivative(&self, lowpass_state: f64, input: f64) -> f64 {
        self.gain * (input - lowpass_state)
    }

    pub fn step(&mut self, input: f64, dt: f64) -> Result<f64> {
        check_input(input, "washout input")?;
        let rho = self.gain;
        self.lowpass_state = rk4_scalar(self.lowpass_state, dt, |s| rho * (input - s));
        Ok(Self::output_for(self.lowpass_state, input))
    }
}

/// Both sides of the swapping identity
/// `W[a·b] = b·W[a] − (1/(p+μ))[ḃ·W[a]]`, sampled on a uniform grid.
#[derive(Debug, Clone, Default)]
pub struct SwappingTrace {
    pub t: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl SwappingTrace {
    pub fn max_abs_lhs(&self) -> f64 {
        self.lhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_residual(&self) -> f64 {
        self.lhs
            .iter()
            .zip(&self.rhs)
            .fold(0.0_f64, |m, (l, r)| m.max((l - r).abs()))
    }
}

/// Integrate both sides of the swapping identity for analytic signals, all
/// filters starting from rest. `b_dot` must be the exact derivative of `b`.
pub fn swapping_decompose(
    a: impl Fn(f64) -> f64,
    b: impl Fn(f64) -> f64,
    b_dot: impl Fn(f64) -> f64,
    mu: f64,
    dt: f64,
    horizon: f64,
) -> SwappingTrace {
    // x = [W[ab], W[a], (1/(p+μ))[ḃ W[a]]]
    let mut x = [0.0; 3];
    let mut rk = Rk4::new(3);
    let steps = IntegratorSpec { dt }.steps_for(horizon);
    let mut trace = SwappingTrace::default();
    let push = |t: f64, x: &[f64; 3], trace: &mut SwappingTrace| {
        trace.t.push(t);
        trace.lhs.push(x[0]);
        trace.rhs.push(b(t) * x[1] - x[2]);
    };
    push(0.0, &x, &mut trace);
    for k in 0..steps {
        let t = k as f64 * dt;
        rk.step(t, dt, &mut x, |t, s, d| {
            let at = a(t);
            d[0] = mu * (at * b(t) - s[0]);
            d[1] = mu * (at - s[1]);
            d[2] = -mu * s[2] + b_dot(t) * s[1];
        });
        push((k + 1) as f64 * dt, &x, &mut trace);
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_filter(f: &mut FirstOrderFilter, input: impl Fn(f64) -> f64, dt: f64, t_end: f64) -> f64 {
        let n = IntegratorSpec { dt }.steps_for(t_end);
        for k in 0..n {
            f.step(input(k as f64 * dt), dt).unwrap();
        }
        f.output()
    }

    #[test]
    fn substepper_without_tolerance_is_plain_rk4() {
        let f = |t: f64, x: &[f64], d: &mut [f64]| {
            d[0] = -3.0 * x[0] + t.sin();
            d[1] = x[0] * x[1];
        };
        let (mut a, mut b) = ([1.0, 0.5], [1.0, 0.5]);
        let mut plain = Rk4::new(2);
        let mut sub = SubstepRk4::new(2, None);
        for k in 0..50 {
            let t = k as f64 * 0.01;
            plain.step(t, 0.01, &mut a, f);
            assert_eq!(sub.advance(t, 0.01, &mut b, f).unwrap(), 1);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn substepper_resolves_a_square_root_start() {
        // x' = a/x from a tiny x0: x² = x0² + 2at, with derivatives unbounded near t = 0
        let (a, x0, dt) = (25.0, 1e-4, 1e-4);
        let f = |_: f64, x: &[f64], d: &mut [f64]| d[0] = a / x[0];
        let exact = |t: f64| (x0 * x0 + 2.0 * a * t).sqrt();

        let mut fixed = [x0];
        let mut rk = Rk4::new(1);
        let mut sub = SubstepRk4::new(1, Some(1e-10));
        let mut adaptive = [x0];
        let mut substeps = 0;
        for k in 0..100 {
            rk.step(k as f64 * dt, dt, &mut fixed, f);
            substeps += sub.advance(k as f64 * dt, dt, &mut adaptive, f).unwrap();
        }
        let t = 100.0 * dt;
        assert!((adaptive[0] / exact(t) - 1.0).abs() < 1e-8, "{} vs {}", adaptive[0], exact(t));
        assert!((fixed[0] / exact(t) - 1.0).abs() > 1e-3);
        assert!(substeps > 100 && substeps < 5000, "{substeps}");
    }

    #[test]
    fn zero_input_stays_zero() {
        let mut f = FirstOrderFilter::new(10.0, 10.0);
        assert_eq!(run_filter(&mut f, |_| 0.0, 1e-3, 1.0), 0.0);
    }

    #[test]
    fn unit_lowpass_step_response() {
        let mut f = FirstOrderFilter::new(10.0, 10.0);
        let y = run_filter(&mut f, |_| 1.0, 1e-4, 0.1);
        let exact = 1.0 - (-1.0_f64).exp();
        assert!((y - exact).abs() < 1e-12, "{y} vs {exact}");
        assert!((y - 0.6321).abs() < 1e-4);
    }

    #[test]
    fn dc_gain_is_kappa_over_nu() {
        let mut f = FirstOrderFilter::new(200.0, 30.0);
        let y = run_filter(&mut f, |_| 1.0, 1e-4, 2.0);
        // closed form: (κ/ν)(1 − e^{−νt}), e^{−60} is far below tolerance
        assert!((y - 200.0 / 30.0).abs() < 1e-9);
        assert!((f.dc_gain() - 6.666_666_666_666_667).abs() < 1e-12);
    }

    #[test]
    fn non_positive_pole_is_rejected() {
        assert!(FirstOrderFilter::try_new(1.0, 0.0).is_err());
        assert!(FirstOrderFilter::try_new(1.0, -3.0).is_err());
    }

    #[test]
    fn non_finite_input_names_the_signal() {
        let mut f = FirstOrderFilter::new(1.0, 1.0);
        let err = f.step(f64::NAN, 1e-3).unwrap_err();
        assert!(err.to_string().contains("first-order filter input"));
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let mut d = DirtyDerivative::new(10.0);
        let mut out = 0.0;
        for _ in 0..20_000 {
            out = d.step(3.5, 1e-4).unwrap();
        }
        assert!(out.abs() < 1e-6);
        let mut settled = DirtyDerivative::seeded(10.0, 3.5);
        assert_eq!(settled.step(3.5, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn derivative_of_ramp_tends_to_one() {
        let dt = 1e-4;
        let mut d = DirtyDerivative::new(10.0);
        let mut out = 0.0;
        for k in 0..30_000 {
            let t = (k + 1) as f64 * dt;
            // ZOH over each step; evaluate the output against the end-of-step input
            d.lowpass_state = rk4_scalar(d.lowpass_state, dt, |s| 10.0 * ((t - dt) - s));
            out = d.output_for(d.lowpass_state, t);
        }
        assert!((out - 1.0).abs() < 2e-3, "{out}");
    }

    #[test]
    fn dirty_derivative_sine_gain() {
        // |μ jω/(jω+μ)| at ω = 1, μ = 10
        let expected = 10.0 / 101.0_f64.sqrt();
        assert!((expected - 0.9950).abs() < 1e-4);

        // joint RK4 with the input evaluated at stage times
        let mu = 10.0;
        let dt = 1e-4;
        let mut x = [0.0];
        let mut rk = Rk4::new(1);
        let d = DirtyDerivative::new(mu);
        let mut peak = 0.0_f64;
        let n = (40.0 / dt) as usize;
        for k in 0..n {
            let t = k as f64 * dt;
            rk.step(t, dt, &mut x, |t, s, ds| ds[0] = d.derivative(s[0], t.sin()));
            let t1 = t + dt;
            if t1 > 40.0 - 2.0 * std::f64::consts::PI {
                peak = peak.max(d.output_for(x[0], t1.sin()).abs());
            }
        }
        assert!((peak - expected).abs() < 1e-6, "{peak} vs {expected}");
    }

    #[test]
    fn washout_removes_constants() {
        let mut w = Washout::new(5.0);
        let mut out = 0.0;
        for k in 0..10_000 {
            out = w.step(2.0, 1e-4).unwrap();
            if k == 0 {
                assert!(out > 1.99);
            }
        }
        // 2·e^{−5}
        assert!((out - 2.0 * (-5.0_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn swapping_zero_and_constant_cases() {
        let z = swapping_decompose(|_| 0.0, |t| t.cos(), |t| -t.sin(), 10.0, 1e-3, 1.0);
        assert_eq!(z.max_abs_lhs(), 0.0);
        assert_eq!(z.max_residual(), 0.0);

        let c = swapping_decompose(|t| (2.0 * t).sin(), |_| 1.7, |_| 0.0, 10.0, 1e-3, 2.0);
        assert!(c.max_residual() <= 1e-14 * c.max_abs_lhs());
    }

    #[test]
    fn swapping_lemma_minus_sign_holds() {
        let tr = swapping_decompose(
            |t| (2.0 * t).sin(),
            |t| (3.0 * t).cos(),
            |t| -3.0 * (3.0 * t).sin(),
            10.0,
            1e-4,
            5.0,
        );
        assert!(tr.max_residual() <= 1e-6 * tr.max_abs_lhs());
    }

    #[test]
    fn cascade_matches_second_order_realization() {
        // W·W versus μ²/(p+μ)² in companion form, input u(t) = sin t + 0.3 cos 5t
        let mu = 10.0;
        let dt = 1e-4;
        let u = |t: f64| t.sin() + 0.3 * (5.0 * t).cos();
        let mut x = [0.0; 4];
        let mut rk = Rk4::new(4);
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for k in 0..30_000 {
            let t = k as f64 * dt;
            rk.step(t, dt, &mut x, |t, s, d| {
                d[0] = mu * (u(t) - s[0]);
                d[1] = mu * (s[0] - s[1]);
                // ẍ + 2μẋ + μ²x = μ²u
                d[2] = s[3];
                d[3] = mu * mu * (u(t) - s[2]) - 2.0 * mu * s[3];
            });
            worst = worst.max((x[1] - x[2]).abs());
            scale = scale.max(x[2].abs());
        }
        assert!(worst <= 1e-9 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |dt: f64| {
            let mut f = FirstOrderFilter::new(50.0, 50.0);
            let y = run_filter(&mut f, |_| 1.0, dt, 0.1);
            (y - (1.0 - (-5.0_f64).exp())).abs()
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn filters_are_linear(alpha in -5.0..5.0f64, beta in -5.0..5.0f64, w1 in 0.1..8.0f64, w2 in 0.1..8.0f64) {
            let dt = 1e-3;
            let mut fa = FirstOrderFilter::new(3.0, 7.0);
            let mut fb = FirstOrderFilter::new(3.0, 7.0);
            let mut fab = FirstOrderFilter::new(3.0, 7.0);
            for k in 0..2000 {
                let t = k as f64 * dt;
                let (a, b) = ((w1 * t).sin(), (w2 * t).cos());
                fa.step(a, dt).unwrap();
                fb.step(b, dt).unwrap();
                fab.step(alpha * a + beta * b, dt).unwrap();
                let lin = alpha * fa.output() + beta * fb.output();
                prop_assert!((fab.output() - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
            }
        }
    }
}
