//! Dynamic regressor extension and mixing.
//!
//! A vector regression `z = φᵀθ` is stacked with filtered copies of itself
//! into a square system `𝒵 = Ωθ`. Multiplying by the adjugate of `Ω` gives
//! one scalar regression per unknown, `𝒴ᵢ = Δ·θᵢ` with `Δ = det Ω`, each
//! estimated by its own gradient law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pebo::{OneDofRegressionSample, TwoDofRegressionSample};

/// Determinant by cofactor expansion along the first row; `m` is row-major `n×n`.
fn det_flat(m: &[f64], n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => {
            let mut minor = vec![0.0; (n - 1) * (n - 1)];
            let mut total = 0.0;
            for col in 0..n {
                if m[col] == 0.0 {
                    continue;
                }
                fill_minor(m, n, 0, col, &mut minor);
                let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * m[col] * det_flat(&minor, n - 1);
            }
            total
        }
    }
}

fn fill_minor(m: &[f64], n: usize, skip_row: usize, skip_col: usize, out: &mut [f64]) {
    let mut k = 0;
    for r in (0..n).filter(|&r| r != skip_row) {
        for c in (0..n).filter(|&c| c != skip_col) {
            out[k] = m[r * n + c];
            k += 1;
        }
    }
}

fn flatten<const N: usize>(m: &[[f64; N]; N]) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

pub fn determinant<const N: usize>(m: &[[f64; N]; N]) -> f64 {
    det_flat(&flatten(m), N)
}

/// Signed cofactor `(−1)^(r+c)·det(minor(r, c))`.
pub fn cofactor<const N: usize>(m: &[[f64; N]; N], row: usize, col: usize) -> f64 {
    let flat = flatten(m);
    let mut minor = vec![0.0; (N - 1) * (N - 1)];
    fill_minor(&flat, N, row, col, &mut minor);
    let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
    sign * det_flat(&minor, N - 1)
}

/// Transpose of the cofactor matrix; well defined for singular `m`.
pub fn adjugate<const N: usize>(m: &[[f64; N]; N]) -> [[f64; N]; N] {
    let flat = flatten(m);
    let mut minor = vec![0.0; (N - 1) * (N - 1)];
    let mut adj = [[0.0; N]; N];
    for (r, row) in adj.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            fill_minor(&flat, N, c, r, &mut minor);
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            *entry = sign * det_flat(&minor, N - 1);
        }
    }
    adj
}

/// The square system `𝒵 = Ω·θ` together with its mixed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedRegressor<const N: usize> {
    pub matrix: [[f64; N]; N],
    pub output: [f64; N],
    pub det: f64,
    /// `adj(Ω)·𝒵`
    pub mixed: [f64; N],
}

impl<const N: usize> ExtendedRegressor<N> {
    pub fn new(matrix: [[f64; N]; N], output: [f64; N]) -> Self {
        let adj = adjugate(&matrix);
        let mixed = std::array::from_fn(|i| (0..N).map(|j| adj[i][j] * output[j]).sum());
        Self {
            matrix,
            output,
            det: determinant(&matrix),
            mixed,
        }
    }

    /// Only the first mixed component, expanded along the first column.
    pub fn new_first_only(matrix: [[f64; N]; N], output: [f64; N]) -> Self {
        let cof: [f64; N] = std::array::from_fn(|j| cofactor(&matrix, j, 0));
        let det = (0..N).map(|j| matrix[j][0] * cof[j]).sum();
        let mut mixed = [0.0; N];
        mixed[0] = (0..N).map(|j| cof[j] * output[j]).sum();
        Self {
            matrix,
            output,
            det,
            mixed,
        }
    }
}

/// One `κ/(p+ν)` filter of a bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankFilter {
    pub gain: f64,
    pub pole: f64,
}

/// `N − 1` filters, each applied to the `N + 1` signals `(z, row₁…row_N)`.
/// Filter states live in a caller-owned slice of length [`FilterBank::state_dim`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<const N: usize> {
    pub filters: Vec<BankFilter>,
}

impl<const N: usize> FilterBank<N> {
    pub fn new(filters: Vec<BankFilter>) -> Result<Self> {
        if filters.len() != N - 1 {
            return Err(Error::validation(
                "bank",
                format!("needs {} filters, got {}", N - 1, filters.len()),
            ));
        }
        for f in &filters {
            if !(f.pole.is_finite() && f.pole > 0.0) {
                return Err(Error::validation("bank.pole", format!("must be positive, got {}", f.pole)));
            }
            if !f.gain.is_finite() {
                return Err(Error::validation("bank.gain", "must be finite"));
            }
        }
        Ok(Self { filters })
    }

    pub const fn state_dim() -> usize {
        (N - 1) * (N + 1)
    }

    /// `signal = (z, row)`, unfiltered.
    pub fn rate(&self, x: &[f64], signal: &[f64; 6], dx: &mut [f64]) {
        let w = N + 1;
        for (j, f) in self.filters.iter().enumerate() {
            for s in 0..w {
                dx[j * w + s] = -f.pole * x[j * w + s] + f.gain * signal[s];
            }
        }
    }

    fn stack(&self, x: &[f64], signal: &[f64; 6]) -> ([[f64; N]; N], [f64; N]) {
        let w = N + 1;
        let mut matrix = [[0.0; N]; N];
        let mut output = [0.0; N];
        output[0] = signal[0];
        matrix[0].copy_from_slice(&signal[1..w]);
        for j in 0..N - 1 {
            let row = &x[j * w..(j + 1) * w];
            output[j + 1] = row[0];
            matrix[j + 1].copy_from_slice(&row[1..]);
        }
        (matrix, output)
    }

    pub fn extend(&self, x: &[f64], signal: &[f64; 6]) -> ExtendedRegressor<N> {
        let (m, z) = self.stack(x, signal);
        ExtendedRegressor::new(m, z)
    }

    pub fn extend_first_only(&self, x: &[f64], signal: &[f64; 6]) -> ExtendedRegressor<N> {
        let (m, z) = self.stack(x, signal);
        ExtendedRegressor::new_first_only(m, z)
    }
}

fn two_dof_signal(sample: &TwoDofRegressionSample, channel: usize) -> [f64; 6] {
    let r = sample.row(channel);
    [sample.output[channel], r[0], r[1], r[2], 0.0, 0.0]
}

fn one_dof_signal(sample: &OneDofRegressionSample) -> [f64; 6] {
    let p = &sample.regressor;
    [sample.output, p[0], p[1], p[2], p[3], p[4]]
}

/// Both 3×3 extensions of the 2-dof rotor; filters 1–2 serve the vertical
/// axis, filters 3–4 the horizontal one.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoDofDrem {
    pub banks: [FilterBank<3>; 2],
}

impl TwoDofDrem {
    pub const STATE_DIM: usize = 2 * FilterBank::<3>::state_dim();

    pub fn new(filters: &[BankFilter; 4]) -> Result<Self> {
        Ok(Self {
            banks: [
                FilterBank::new(filters[..2].to_vec())?,
                FilterBank::new(filters[2..].to_vec())?,
            ],
        })
    }

    pub fn rate(&self, x: &[f64], sample: &TwoDofRegressionSample, dx: &mut [f64]) {
        let h = FilterBank::<3>::state_dim();
        for ch in 0..2 {
            self.banks[ch].rate(&x[ch * h..], &two_dof_signal(sample, ch), &mut dx[ch * h..]);
        }
    }

    pub fn extend(&self, x: &[f64], sample: &TwoDofRegressionSample) -> [ExtendedRegressor<3>; 2] {
        let h = FilterBank::<3>::state_dim();
        std::array::from_fn(|ch| self.banks[ch].extend(&x[ch * h..], &two_dof_signal(sample, ch)))
    }
}

/// The 5×5 extension of the 1-dof regression.
#[derive(Debug, Clone, PartialEq)]
pub struct OneDofDrem {
    pub bank: FilterBank<5>,
}

impl OneDofDrem {
    pub const STATE_DIM: usize = FilterBank::<5>::state_dim();

    pub fn new(filters: &[BankFilter; 4]) -> Result<Self> {
        Ok(Self {
            bank: FilterBank::new(filters.to_vec())?,
        })
    }

    pub fn rate(&self, x: &[f64], sample: &OneDofRegressionSample, dx: &mut [f64]) {
        self.bank.rate(x, &one_dof_signal(sample), dx);
    }

    /// Only `mixed[0]`, the scalar regression for the offset itself, is populated.
    pub fn extend(&self, x: &[f64], sample: &OneDofRegressionSample) -> ExtendedRegressor<5> {
        self.bank.extend_first_only(x, &one_dof_signal(sample))
    }
}

/// `(1 − e^{−x})/x`, accurate near zero.
fn relative_decay(x: f64) -> f64 {
    if x < 1e-12 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// Scalar gradient law `ẋ = γΔ(𝒴 − Δx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimator {
    pub estimate: f64,
    pub gain: f64,
}

impl GradientEstimator {
    pub fn new(initial: f64, gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::validation("estimator.gain", format!("must be positive, got {gain}")));
        }
        Ok(Self {
            estimate: initial,
            gain,
        })
    }

    pub fn rate(&self, det: f64, mixed: f64) -> f64 {
        self.gain * det * (mixed - det * self.estimate)
    }

    /// Exact solution over `dt` for `Δ`, `𝒴` held constant.
    pub fn step(&mut self, det: f64, mixed: f64, dt: f64) -> f64 {
        self.step_between((det, mixed), (det, mixed), dt)
    }

    /// Exponential trapezoid step between samples at the start and end of a step.
    ///
    /// The linear law is stiff when `γΔ²dt` is large; the exponential form is
    /// unconditionally stable, never divides by `Δ`, and when `𝒴 = Δθ` moves the
    /// estimate monotonically toward `θ`.
    pub fn step_between(&mut self, start: (f64, f64), end: (f64, f64), dt: f64) -> f64 {
        let decay = 0.5 * self.gain * (start.0 * start.0 + end.0 * end.0);
        let drive = 0.5 * self.gain * (start.0 * start.1 + end.0 * end.1);
        let x = decay * dt;
        self.estimate = self.estimate * (-x).exp() + dt * relative_decay(x) * drive;
        self.estimate
    }
}

/// Running `∫Δ²dt`, trapezoid rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExcitationMonitor {
    pub integral: f64,
}

impl ExcitationMonitor {
    pub fn accumulate(&mut self, det_start: f64, det_end: f64, dt: f64) -> f64 {
        self.integral += 0.5 * dt * (det_start * det_start + det_end * det_end);
        self.integral
    }
}

/// Flux estimate from the open-loop copy and the estimated offsets.
pub fn flux_estimate<const N: usize>(open_loop_flux: &[f64; N], offset_estimate: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| open_loop_flux[i] + offset_estimate[i])
}
