//! Parameter-estimation-based observer front end.
//!
//! An open-loop copy of the flux dynamics, `ψ̇ = −R·I + U`, is integrated next
//! to the plant. Because the true flux obeys the same equation, `λ − ψ` stays
//! constant, and estimating flux reduces to estimating that constant offset.
//! This module turns measured currents and voltages into linear regressions
//! for the offset; [`crate::drem`] then estimates it.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::signals::Rk4;

/// Rate of the open-loop flux copy for one coil.
#[inline]
pub fn open_loop_flux_rate(current: f64, voltage: f64, resistance: f64) -> f64 {
    -resistance * current + voltage
}

/// Open-loop flux copies `ψ` for `N` coils.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicExtension<const N: usize> {
    pub open_loop_flux: [f64; N],
}

impl<const N: usize> DynamicExtension<N> {
    pub fn new(initial: [f64; N]) -> Self {
        Self {
            open_loop_flux: initial,
        }
    }

    /// Advance by one RK4 step with currents and voltages held over the step.
    pub fn step(&mut self, current: &[f64; N], voltage: &[f64; N], resistance: f64, dt: f64) -> Result<[f64; N]> {
        for i in 0..N {
            if !(current[i].is_finite() && voltage[i].is_finite()) {
                return Err(Error::non_finite("open-loop flux input", None));
            }
            // constant rate over the step, so RK4 is exact here
            self.open_loop_flux[i] += dt * open_loop_flux_rate(current[i], voltage[i], resistance);
        }
        Ok(self.open_loop_flux)
    }
}

/// Measurable regression signals of the 2-dof rotor.
///
/// For each axis, `output[ch] = a·shifted[2ch] + b·shifted[2ch+1] − gap_term·a·b`
/// with `(a, b)` the flux offsets of the second and first coil of that axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoDofRegressionSample {
    pub output: [f64; 2],
    /// `I − (2c/k)ψ`
    pub shifted_current: [f64; 4],
    /// `2c/k`
    pub gap_term: f64,
}

impl TwoDofRegressionSample {
    /// Regressor row of one axis against the unknowns
    /// `(offset_first, offset_second, offset_first·offset_second)`.
    pub fn row(&self, channel: usize) -> [f64; 3] {
        let first = self.shifted_current[2 * channel];
        let second = self.shifted_current[2 * channel + 1];
        [second, first, -self.gap_term]
    }

    /// Output predicted by the regression for given flux offsets.
    pub fn predicted_output(&self, offsets: &[f64; 4]) -> [f64; 2] {
        std::array::from_fn(|ch| {
            let (a, b) = (offsets[2 * ch], offsets[2 * ch + 1]);
            let r = self.row(ch);
            r[0] * a + r[1] * b + r[2] * a * b
        })
    }
}

/// Build the 2-dof regression from measured currents and open-loop fluxes.
pub fn build_regressors_2dof(current: &[f64; 4], open_loop_flux: &[f64; 4], p: &PlantParams) -> TwoDofRegressionSample {
    let gap_term = 2.0 * p.nominal_gap / p.flux_constant;
    let (i, psi) = (current, open_loop_flux);
    let channel = |a: usize, b: usize| -i[a] * psi[b] - i[b] * psi[a] + gap_term * psi[a] * psi[b];
    TwoDofRegressionSample {
        output: [channel(0, 1), channel(2, 3)],
        shifted_current: std::array::from_fn(|j| i[j] - gap_term * psi[j]),
        gap_term,
    }
}

/// Highest power of the offset appearing anywhere in the 1-dof construction.
pub const MAX_OFFSET_DEGREE: usize = 6;

/// A signal written as a polynomial in the unknown constant flux offset,
/// `Σ coeffs[i]·offsetⁱ`, with measurable coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetPoly {
    coeffs: [f64; MAX_OFFSET_DEGREE + 1],
    degree: usize,
}

impl OffsetPoly {
    pub fn zero() -> Self {
        Self {
            coeffs: [0.0; MAX_OFFSET_DEGREE + 1],
            degree: 0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_coeffs(&[value])
    }

    /// Panics if more than `MAX_OFFSET_DEGREE + 1` coefficients are given.
    pub fn from_coeffs(c: &[f64]) -> Self {
        assert!(
            !c.is_empty() && c.len() <= MAX_OFFSET_DEGREE + 1,
            "offset polynomial degree out of range"
        );
        let mut p = Self::zero();
        p.coeffs[..c.len()].copy_from_slice(c);
        p.degree = c.len() - 1;
        p
    }

    /// Nominal degree; tracks structure, not numerically vanishing leading terms.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..=self.degree]
    }

    pub fn coeff(&self, power: usize) -> f64 {
        self.coeffs.get(power).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, offset: f64) -> f64 {
        self.coeffs().iter().rev().fold(0.0, |acc, c| acc * offset + c)
    }

    pub fn scale(mut self, factor: f64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c *= factor);
        self
    }

    /// Multiply by the offset itself.
    pub fn shift_up(self) -> Self {
        let mut out = Self::zero();
        out.degree = self.degree + 1;
        assert!(out.degree <= MAX_OFFSET_DEGREE, "offset polynomial degree exceeds 6");
        out.coeffs[1..=out.degree].copy_from_slice(self.coeffs());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs().iter().all(|c| c.is_finite())
    }

    /// Load coefficient values from filter states; the slice length sets the degree.
    pub fn from_states(states: &[f64]) -> Self {
        Self::from_coeffs(states)
    }
}

impl Add for OffsetPoly {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        self.degree = self.degree.max(rhs.degree);
        self
    }
}

impl Neg for OffsetPoly {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Sub for OffsetPoly {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for OffsetPoly {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let degree = self.degree + rhs.degree;
        assert!(degree <= MAX_OFFSET_DEGREE, "offset polynomial degree exceeds 6");
        let mut out = Self::zero();
        out.degree = degree;
        for (i, a) in self.coeffs().iter().enumerate() {
            for (j, b) in rhs.coeffs().iter().enumerate() {
                out.coeffs[i + j] += a * b;
            }
        }
        out
    }
}

impl Mul<f64> for OffsetPoly {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

/// Washout-filtered 1-dof regression: `output ≈ Σᵢ regressor[i]·offset^(i+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneDofRegressionSample {
    pub output: f64,
    pub regressor: [f64; 5],
    /// Raw sixth-power coefficient before the washout; tends to one.
    pub sixth_power_coeff: f64,
}

/// Measured signals driving the 1-dof pipeline at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineInputs {
    pub current: f64,
    pub voltage: f64,
    pub open_loop_flux: f64,
}

/// Intermediate pipeline signals, exposed for validation against directly
/// simulated physical counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSignals {
    /// Filtered current derivative `(μp/(p+μ))[i]`.
    pub current_rate: f64,
    /// `W` of `current_rate`.
    pub current_rate_filtered: f64,
    pub swap_term: f64,
    pub swap_term_filtered: f64,
    /// `ψ² + 2ψ·offset + offset²`, i.e. the squared flux.
    pub flux_sq: OffsetPoly,
    /// `W[λ²]`
    pub flux_sq_f1: OffsetPoly,
    /// `W²[λ²]`
    pub flux_sq_f2: OffsetPoly,
    /// `W[(λ² − 2mgk)·W[λ²]]`
    pub lift_f1: OffsetPoly,
    /// `W` applied twice to `(λ² − 2mgk)·W[λ²]`
    pub lift_f2: OffsetPoly,
    /// `W[(λ² − 2mgk)·W²[λ²]]`
    pub lift_cross: OffsetPoly,
    /// Residual polynomial, normalized so the sixth-power coefficient tends to +1.
    pub residual: OffsetPoly,
}

// state layout of the pipeline
const DD: usize = 0;
const RATE_F: usize = 1;
const POWER_F: usize = 2;
const SWAP_INT: usize = 3;
const SWAP_F: usize = 4;
const SQ_F1: usize = 5;
const SQ_F2: usize = 8;
const LIFT_F1: usize = 11;
const LIFT_F2: usize = 16;
const CROSS_F: usize = 21;
const WASH: usize = 26;

/// Construction of the 1-dof regression from current, voltage and ψ.
///
/// The state vector has [`OneDofPebo::STATE_DIM`] entries and can be advanced
/// standalone with [`OneDofPebo::step`] or embedded into a larger RK4 system
/// via [`OneDofPebo::rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneDofPebo {
    pub plant: PlantParams,
    /// Corner of `W(p) = μ/(p+μ)`.
    pub filter_rate: f64,
    /// Corner of the final washout.
    pub washout_rate: f64,
}

impl OneDofPebo {
    pub const STATE_DIM: usize = 32;

    pub fn new(plant: PlantParams, filter_rate: f64, washout_rate: f64) -> Result<Self> {
        if !(filter_rate.is_finite() && filter_rate > 0.0) {
            return Err(Error::validation("pebo.filter_rate", "must be positive"));
        }
        if !(washout_rate.is_finite() && washout_rate > 0.0) {
            return Err(Error::validation("pebo.washout_rate", "must be positive"));
        }
        Ok(Self {
            plant,
            filter_rate,
            washout_rate,
        })
    }

    /// Zero filter states, except the derivative filter which starts settled on
    /// the first current sample.
    pub fn initial_state(&self, initial_current: f64) -> [f64; Self::STATE_DIM] {
        let mut x = [0.0; Self::STATE_DIM];
        x[DD] = initial_current;
        x
    }

    fn lift_bias(&self) -> f64 {
        2.0 * self.plant.mass * self.plant.gravity * self.plant.flux_constant
    }

    pub fn signals(&self, x: &[f64], inp: &PipelineInputs) -> PipelineSignals {
        let mu = self.filter_rate;
        let p = &self.plant;
        let (k, km) = (p.flux_constant, p.flux_constant * p.mass);
        let psi = inp.open_loop_flux;

        let current_rate = mu * (inp.current - x[DD]);
        let current_rate_filtered = x[RATE_F];
        let swap_term = x[POWER_F] - psi * current_rate + x[SWAP_INT];
        let swap_term_filtered = x[SWAP_F];

        let flux_sq = OffsetPoly::from_coeffs(&[psi * psi, 2.0 * psi, 1.0]);
        let flux_sq_f1 = OffsetPoly::from_states(&x[SQ_F1..SQ_F1 + 3]);
        let flux_sq_f2 = OffsetPoly::from_states(&x[SQ_F2..SQ_F2 + 3]);
        let lift_f1 = OffsetPoly::from_states(&x[LIFT_F1..LIFT_F1 + 5]);
        let lift_f2 = OffsetPoly::from_states(&x[LIFT_F2..LIFT_F2 + 5]);
        let lift_cross = OffsetPoly::from_states(&x[CROSS_F..CROSS_F + 5]);

        let residual = (flux_sq_f2 * (km * swap_term) - flux_sq_f1 * swap_term_filtered) * (2.0 * k * mu)
            - (flux_sq_f2 * current_rate - flux_sq_f1 * current_rate_filtered).shift_up() * (2.0 * k * km * mu)
            + flux_sq_f2 * lift_f1
            - flux_sq_f1 * lift_cross
            - flux_sq_f1 * lift_f2;

        PipelineSignals {
            current_rate,
            current_rate_filtered,
            swap_term,
            swap_term_filtered,
            flux_sq,
            flux_sq_f1,
            flux_sq_f2,
            lift_f1,
            lift_f2,
            lift_cross,
            residual: -residual,
        }
    }

    /// Pre-washout regression: `(z⁰, φ⁰)` from the residual polynomial.
    fn raw_regression(residual: &OffsetPoly) -> [f64; 6] {
        let mut raw = [0.0; 6];
        raw[0] = -residual.coeff(0);
        for (i, r) in raw.iter_mut().enumerate().skip(1) {
            *r = residual.coeff(i);
        }
        raw
    }

    pub fn rate(&self, x: &[f64], inp: &PipelineInputs, dx: &mut [f64]) {
        let mu = self.filter_rate;
        let p = &self.plant;
        let km = p.flux_constant * p.mass;
        let s = self.signals(x, inp);
        let coil_drive = inp.voltage - p.resistance * inp.current;

        dx[DD] = mu * (inp.current - x[DD]);
        dx[RATE_F] = mu * (s.current_rate - x[RATE_F]);
        dx[POWER_F] = mu * (inp.current * coil_drive - x[POWER_F]);
        dx[SWAP_INT] = -mu * x[SWAP_INT] + coil_drive * s.current_rate;
        dx[SWAP_F] = mu * (km * s.swap_term - x[SWAP_F]);

        let bias = OffsetPoly::constant(self.lift_bias());
        let lift = (s.flux_sq - bias) * s.flux_sq_f1;
        let cross = (s.flux_sq - bias) * s.flux_sq_f2;
        for j in 0..3 {
            dx[SQ_F1 + j] = mu * (s.flux_sq.coeff(j) - x[SQ_F1 + j]);
            dx[SQ_F2 + j] = mu * (x[SQ_F1 + j] - x[SQ_F2 + j]);
        }
        for j in 0..5 {
            dx[LIFT_F1 + j] = mu * (lift.coeff(j) - x[LIFT_F1 + j]);
            dx[LIFT_F2 + j] = mu * (x[LIFT_F1 + j] - x[LIFT_F2 + j]);
            dx[CROSS_F + j] = mu * (cross.coeff(j) - x[CROSS_F + j]);
        }

        let raw = Self::raw_regression(&s.residual);
        for j in 0..6 {
            dx[WASH + j] = self.washout_rate * (raw[j] - x[WASH + j]);
        }
    }

    /// Washout-filtered regression at the current state.
    pub fn sample(&self, x: &[f64], inp: &PipelineInputs) -> Result<OneDofRegressionSample> {
        let s = self.signals(x, inp);
        let stages = [
            ("current derivative filter", s.current_rate.is_finite() && s.current_rate_filtered.is_finite()),
            ("swapping term", s.swap_term.is_finite() && s.swap_term_filtered.is_finite()),
            ("squared-flux filters", s.flux_sq_f1.is_finite() && s.flux_sq_f2.is_finite()),
            (
                "lift filters",
                s.lift_f1.is_finite() && s.lift_f2.is_finite() && s.lift_cross.is_finite(),
            ),
            ("residual polynomial", s.residual.is_finite()),
        ];
        if let Some((stage, _)) = stages.iter().find(|(_, ok)| !ok) {
            return Err(Error::non_finite(format!("regression pipeline ({stage})"), None));
        }
        let raw = Self::raw_regression(&s.residual);
        let out: [f64; 6] = std::array::from_fn(|j| raw[j] - x[WASH + j]);
        Ok(OneDofRegressionSample {
            output: out[0],
            regressor: [out[1], out[2], out[3], out[4], out[5]],
            sixth_power_coeff: s.residual.coeff(6),
        })
    }

    /// Advance the pipeline state by one RK4 step with inputs held over the step.
    pub fn step(&self, x: &mut [f64; Self::STATE_DIM], inp: &PipelineInputs, dt: f64, rk: &mut Rk4) -> Result<()> {
        if !(inp.current.is_finite() && inp.voltage.is_finite() && inp.open_loop_flux.is_finite()) {
            return Err(Error::non_finite("regression pipeline input", None));
        }
        rk.step(0.0, dt, x, |_, s, d| self.rate(s, inp, d));
        Ok(())
    }
}

/// Sixth-power coefficient of the residual when every filter starts from rest:
/// `2·w₁·w₃ − w₂²` with `wₙ = Wⁿ[1]` the n-stage step response.
pub fn sixth_power_coeff_closed_form(filter_rate: f64, t: f64) -> f64 {
    let stage = |n: u32| {
        let x = filter_rate * t;
        let mut term = 1.0;
        let mut sum = 0.0;
        for j in 0..n {
            if j > 0 {
                term *= x / j as f64;
            }
            sum += term;
        }
        1.0 - (-x).exp() * sum
    };
    2.0 * stage(1) * stage(3) - stage(2).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extension_with_zero_drive_is_constant() {
        let mut ext = DynamicExtension::new([0.3, -0.1]);
        for _ in 0..100 {
            ext.step(&[0.0; 2], &[0.0; 2], 2.52, 1e-3).unwrap();
        }
        assert_eq!(ext.open_loop_flux, [0.3, -0.1]);
    }

    #[test]
    fn zero_open_loop_flux_gives_zero_output() {
        let p = PlantParams::two_dof_rig();
        let i = [1.0, 2.0, 3.0, 4.0];
        let r = build_regressors_2dof(&i, &[0.0; 4], &p);
        assert_eq!(r.output, [0.0, 0.0]);
        assert_eq!(r.shifted_current, i);
    }

    #[test]
    fn regression_identity_from_flux_current_relation() {
        // arbitrary fluxes and positions; currents from the magnet model
        let p = PlantParams::two_dof_rig();
        let (c, k) = (p.nominal_gap, p.flux_constant);
        let flux = [0.51, 0.62, 0.73, 0.24];
        let offsets = [0.5, 0.6, 0.7, 0.2];
        let (y, x) = (0.0013, -0.0021);
        let i = [(c - y) * flux[0] / k, (c + y) * flux[1] / k, (c - x) * flux[2] / k, (c + x) * flux[3] / k];
        let psi: [f64; 4] = std::array::from_fn(|j| flux[j] - offsets[j]);
        let r = build_regressors_2dof(&i, &psi, &p);
        let pred = r.predicted_output(&offsets);
        for ch in 0..2 {
            assert!((r.output[ch] - pred[ch]).abs() <= 1e-12 * r.output[ch].abs());
        }
        // the swapped labelling does not satisfy the identity
        let swapped = [0.6, 0.5, 0.2, 0.7];
        let bad = r.predicted_output(&swapped);
        assert!((r.output[0] - bad[0]).abs() > 1e-3 * r.output[0].abs());
    }

    #[test]
    fn zero_offset_gives_zero_output() {
        let p = PlantParams::two_dof_rig();
        let (c, k) = (p.nominal_gap, p.flux_constant);
        let flux = [0.4, 0.9, 0.2, 0.3];
        let y = 0.002;
        let i = [(c - y) * flux[0] / k, (c + y) * flux[1] / k, c * flux[2] / k, c * flux[3] / k];
        let r = build_regressors_2dof(&i, &flux, &p);
        for ch in 0..2 {
            assert!(r.output[ch].abs() <= 1e-12 * (i[2 * ch] * flux[2 * ch + 1]).abs());
        }
    }

    #[test]
    fn offset_poly_algebra() {
        let a = OffsetPoly::from_coeffs(&[1.0, 2.0]);
        let b = OffsetPoly::from_coeffs(&[3.0, 0.0, -1.0]);
        let prod = a * b;
        assert_eq!(prod.coeffs(), &[3.0, 6.0, -1.0, -2.0]);
        assert_eq!(prod.degree(), 3);
        assert_eq!((a + b).coeffs(), &[4.0, 2.0, -1.0]);
        assert_eq!(a.shift_up().coeffs(), &[0.0, 1.0, 2.0]);
        assert_eq!(a.eval(2.0), 5.0);
    }

    #[test]
    #[should_panic(expected = "exceeds 6")]
    fn degree_bound_enforced() {
        let cubic = OffsetPoly::from_coeffs(&[0.0, 0.0, 0.0, 1.0]);
        let _ = cubic * cubic.shift_up();
    }

    #[test]
    fn quiet_inputs_leave_only_offset_terms() {
        // with no measured activity only the offset's own powers survive:
        // the fourth-power coefficient is −2mgk times the sixth
        let plant = PlantParams::one_dof_rig();
        let pebo = OneDofPebo::new(plant, 10.0, 0.01).unwrap();
        let mut x = pebo.initial_state(0.0);
        let mut rk = Rk4::new(OneDofPebo::STATE_DIM);
        let inp = PipelineInputs {
            current: 0.0,
            voltage: 0.0,
            open_loop_flux: 0.0,
        };
        let bias = 2.0 * plant.mass * plant.gravity * plant.flux_constant;
        for _ in 0..200 {
            pebo.step(&mut x, &inp, 1e-3, &mut rk).unwrap();
            let s = pebo.signals(&x, &inp);
            assert_eq!((s.current_rate, s.swap_term, s.swap_term_filtered), (0.0, 0.0, 0.0));
            for power in [0, 1, 2, 3, 5] {
                assert_eq!(s.residual.coeff(power), 0.0);
            }
            let c6 = s.residual.coeff(6);
            assert!((s.residual.coeff(4) + bias * c6).abs() <= 1e-12 * bias * c6.abs());
            assert_eq!(pebo.sample(&x, &inp).unwrap().output, 0.0);
        }
    }

    #[test]
    fn sixth_power_coeff_follows_closed_form() {
        let mu = 10.0;
        let dt = 1e-4;
        let pebo = OneDofPebo::new(PlantParams::one_dof_rig(), mu, 0.01).unwrap();
        let mut x = pebo.initial_state(0.3);
        let mut rk = Rk4::new(OneDofPebo::STATE_DIM);
        let inp = PipelineInputs {
            current: 0.3,
            voltage: 0.2,
            open_loop_flux: 0.05,
        };
        assert_eq!(pebo.sample(&x, &inp).unwrap().sixth_power_coeff, 0.0);
        for n in 1..=20_000 {
            pebo.step(&mut x, &inp, dt, &mut rk).unwrap();
            if n % 1000 == 0 {
                let t = n as f64 * dt;
                let c6 = pebo.sample(&x, &inp).unwrap().sixth_power_coeff;
                assert!((c6 - sixth_power_coeff_closed_form(mu, t)).abs() < 1e-10, "t={t}");
            }
        }
        let c6 = pebo.sample(&x, &inp).unwrap().sixth_power_coeff;
        assert!((c6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn closed_form_limits() {
        assert_eq!(sixth_power_coeff_closed_form(10.0, 0.0), 0.0);
        assert!((sixth_power_coeff_closed_form(10.0, 5.0) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn product_evaluates_pointwise(a in prop::collection::vec(-3.0..3.0f64, 1..4),
                                       b in prop::collection::vec(-3.0..3.0f64, 1..4),
                                       at in -2.0..2.0f64) {
            let (pa, pb) = (OffsetPoly::from_coeffs(&a), OffsetPoly::from_coeffs(&b));
            let direct = pa.eval(at) * pb.eval(at);
            prop_assert!(((pa * pb).eval(at) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            let sum = pa.eval(at) + pb.eval(at);
            prop_assert!(((pa + pb).eval(at) - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
    }
}
