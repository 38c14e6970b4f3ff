//! Ground-truth models of the two levitation rigs.
//!
//! The 2-dof rotor is held by four electromagnets, two per axis; the 1-dof
//! rig is a single magnet lifting a ball against gravity. Both use the
//! gap-dependent flux/current relation `k·I = (c ∓ q)·λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// kg
    pub mass: f64,
    /// Flux constant of the magnet model, H·m.
    pub flux_constant: f64,
    /// Nominal air gap, m.
    pub nominal_gap: f64,
    /// Coil resistance, Ω.
    pub resistance: f64,
    /// m/s²
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl PlantParams {
    /// Rotor rig parameters used for the 2-dof scenarios.
    pub fn two_dof_rig() -> Self {
        Self {
            mass: 0.0844,
            flux_constant: 6.4042e-5,
            nominal_gap: 0.005,
            resistance: 2.52,
            gravity: default_gravity(),
        }
    }

    /// Ball rig parameters used for the 1-dof scenarios.
    pub fn one_dof_rig() -> Self {
        Self {
            flux_constant: 1.0,
            ..Self::two_dof_rig()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("plant.mass", self.mass),
            ("plant.flux_constant", self.flux_constant),
            ("plant.nominal_gap", self.nominal_gap),
            ("plant.resistance", self.resistance),
            ("plant.gravity", self.gravity),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(name, format!("must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Flux that produces a force equal to the weight, `√(2kmg)`.
    pub fn hover_flux(&self) -> f64 {
        (2.0 * self.flux_constant * self.mass * self.gravity).sqrt()
    }
}

/// Magnetic force `λ²/(2k)` of one actuator.
#[inline]
pub fn force(flux: f64, flux_constant: f64) -> f64 {
    flux * flux / (2.0 * flux_constant)
}

pub fn forces<const N: usize>(flux: &[f64; N], flux_constant: f64) -> [f64; N] {
    flux.map(|l| force(l, flux_constant))
}

/// Current of a coil whose air gap is `gap` given its flux.
#[inline]
pub fn coil_current(flux: f64, gap: f64, flux_constant: f64) -> f64 {
    gap * flux / flux_constant
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoDofState {
    /// Coil fluxes: upper, lower, left, right magnet (Wb).
    pub flux: [f64; 4],
    pub vertical: f64,
    pub vertical_speed: f64,
    pub horizontal: f64,
    pub horizontal_speed: f64,
}

impl TwoDofState {
    pub const DIM: usize = 8;

    pub fn write_to(&self, out: &mut [f64]) {
        out[..4].copy_from_slice(&self.flux);
        out[4] = self.vertical;
        out[5] = self.vertical_speed;
        out[6] = self.horizontal;
        out[7] = self.horizontal_speed;
    }

    pub fn read_from(x: &[f64]) -> Self {
        Self {
            flux: [x[0], x[1], x[2], x[3]],
            vertical: x[4],
            vertical_speed: x[5],
            horizontal: x[6],
            horizontal_speed: x[7],
        }
    }

    pub fn in_domain(&self, params: &PlantParams) -> bool {
        self.vertical.abs() < params.nominal_gap && self.horizontal.abs() < params.nominal_gap
    }
}

pub fn currents_2dof(s: &TwoDofState, p: &PlantParams) -> [f64; 4] {
    let (c, k) = (p.nominal_gap, p.flux_constant);
    [
        coil_current(s.flux[0], c - s.vertical, k),
        coil_current(s.flux[1], c + s.vertical, k),
        coil_current(s.flux[2], c - s.horizontal, k),
        coil_current(s.flux[3], c + s.horizontal, k),
    ]
}

/// Time derivative of the 2-dof state under coil voltages `voltage`.
pub fn derivatives_2dof(s: &TwoDofState, voltage: &[f64; 4], p: &PlantParams) -> TwoDofState {
    let current = currents_2dof(s, p);
    let f = forces(&s.flux, p.flux_constant);
    TwoDofState {
        flux: std::array::from_fn(|i| -p.resistance * current[i] + voltage[i]),
        vertical: s.vertical_speed,
        vertical_speed: (f[0] - f[1]) / p.mass - p.gravity,
        horizontal: s.horizontal_speed,
        horizontal_speed: (f[2] - f[3]) / p.mass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneDofState {
    pub flux: f64,
    pub position: f64,
    pub speed: f64,
}

impl OneDofState {
    pub const DIM: usize = 3;

    pub fn in_domain(&self, params: &PlantParams) -> bool {
        self.position.abs() < params.nominal_gap
    }
}

pub fn current_1dof(s: &OneDofState, p: &PlantParams) -> f64 {
    coil_current(s.flux, p.nominal_gap - s.position, p.flux_constant)
}

pub fn derivatives_1dof(s: &OneDofState, voltage: f64, p: &PlantParams) -> OneDofState {
    OneDofState {
        flux: -p.resistance * current_1dof(s, p) + voltage,
        position: s.speed,
        speed: force(s.flux, p.flux_constant) / p.mass - p.gravity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Rk4;

    #[test]
    fn force_examples() {
        let p = PlantParams::two_dof_rig();
        assert_eq!(force(0.0, p.flux_constant), 0.0);
        let hover = force(p.hover_flux(), p.flux_constant);
        assert!((hover - p.mass * p.gravity).abs() <= 1e-15 * hover);
        assert!((force(2.0, 6.4042e-5) - 31_229.505_636_925_77).abs() < 1e-8);
        assert_eq!(forces(&[0.0, 2.0], 6.4042e-5)[0], 0.0);
    }

    #[test]
    fn current_examples() {
        let p = PlantParams::two_dof_rig();
        let s = TwoDofState {
            flux: [1.0; 4],
            ..Default::default()
        };
        for i in currents_2dof(&s, &p) {
            assert!((i - 78.073_764_092_314_43).abs() < 1e-9);
        }
        assert_eq!(currents_2dof(&TwoDofState::default(), &p), [0.0; 4]);
        let closed = TwoDofState {
            flux: [1.0, 0.0, 0.0, 0.0],
            vertical: p.nominal_gap,
            ..Default::default()
        };
        assert_eq!(currents_2dof(&closed, &p)[0], 0.0);
    }

    #[test]
    fn derivative_examples() {
        let p = PlantParams::two_dof_rig();
        let s = TwoDofState {
            flux: [0.7, 0.7, 0.3, 0.3],
            horizontal: 0.001,
            ..Default::default()
        };
        let d = derivatives_2dof(&s, &[0.0; 4], &p);
        assert_eq!(d.vertical_speed, -p.gravity);
        assert_eq!(d.horizontal_speed, 0.0);

        let unit = TwoDofState {
            flux: [1.0; 4],
            ..Default::default()
        };
        for r in derivatives_2dof(&unit, &[0.0; 4], &p).flux {
            assert!((r + 196.745_885_512_632_36).abs() < 1e-9);
        }
    }

    #[test]
    fn one_dof_examples() {
        let p = PlantParams::one_dof_rig();
        let hover = OneDofState {
            flux: p.hover_flux(),
            ..Default::default()
        };
        assert!(derivatives_1dof(&hover, 0.0, &p).speed.abs() < 1e-14);
        let s = OneDofState {
            flux: 0.01,
            ..Default::default()
        };
        assert!((current_1dof(&s, &p) - 5e-5).abs() < 1e-18);
        let closed = OneDofState {
            flux: 3.0,
            position: p.nominal_gap,
            speed: 0.0,
        };
        assert_eq!(current_1dof(&closed, &p), 0.0);
    }

    fn free_trajectory(p: &PlantParams, dt: f64, steps: usize) -> Vec<TwoDofState> {
        let mut x = [0.0; TwoDofState::DIM];
        TwoDofState {
            flux: [0.5, 0.6, 0.7, 0.2],
            vertical: 0.0005,
            vertical_speed: 0.0,
            horizontal: -0.0002,
            horizontal_speed: 0.0,
        }
        .write_to(&mut x);
        let mut rk = Rk4::new(TwoDofState::DIM);
        let mut out = vec![TwoDofState::read_from(&x)];
        for k in 0..steps {
            rk.step(k as f64 * dt, dt, &mut x, |_, s, d| {
                derivatives_2dof(&TwoDofState::read_from(s), &[0.0; 4], p).write_to(d)
            });
            out.push(TwoDofState::read_from(&x));
        }
        out
    }

    #[test]
    fn unforced_flux_energy_only_dissipates() {
        // the ball rig keeps the gap open over this short window
        let p = PlantParams {
            flux_constant: 1.0,
            ..PlantParams::two_dof_rig()
        };
        let traj = free_trajectory(&p, 1e-4, 50);
        let energy = |s: &TwoDofState| s.flux.iter().map(|l| l * l).sum::<f64>() / 2.0;
        for w in traj.windows(2) {
            assert!(w[0].in_domain(&p));
            assert!(energy(&w[1]) <= energy(&w[0]));
            let i = currents_2dof(&w[0], &p);
            let rate: f64 = (0..4).map(|j| -p.resistance * i[j] * w[0].flux[j]).sum();
            assert!(rate <= 0.0);
        }
    }

    #[test]
    fn position_difference_matches_speed() {
        let p = PlantParams {
            flux_constant: 1.0,
            ..PlantParams::two_dof_rig()
        };
        let dt = 1e-4;
        let traj = free_trajectory(&p, dt, 400);
        for k in 1..traj.len() - 1 {
            let fd = (traj[k + 1].vertical - traj[k - 1].vertical) / (2.0 * dt);
            // central difference error ~ dt²·|jerk|/6, jerk is about g·R/k·c here
            assert!((fd - traj[k].vertical_speed).abs() < 1e-7);
        }
    }

    #[test]
    fn flux_current_identity_holds() {
        let p = PlantParams::two_dof_rig();
        for s in free_trajectory(&p, 1e-5, 200) {
            let i = currents_2dof(&s, &p);
            let k = p.flux_constant;
            let c = p.nominal_gap;
            let checks = [
                (k * i[0] + s.flux[0] * s.vertical, c * s.flux[0]),
                (k * i[1] - s.flux[1] * s.vertical, c * s.flux[1]),
                (k * i[2] + s.flux[2] * s.horizontal, c * s.flux[2]),
                (k * i[3] - s.flux[3] * s.horizontal, c * s.flux[3]),
            ];
            for (lhs, rhs) in checks {
                assert!((lhs - rhs).abs() <= 1e-14 * rhs.abs());
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(PlantParams::two_dof_rig().validate().is_ok());
        let bad = PlantParams {
            resistance: 0.0,
            ..PlantParams::two_dof_rig()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("resistance"));
    }
}
