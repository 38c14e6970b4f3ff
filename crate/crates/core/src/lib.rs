//! Sensorless observers and controllers for magnetic levitation rigs.
//!
//! Flux is reconstructed from currents and voltages by an open-loop flux copy
//! plus an estimated constant offset ([`pebo`], [`drem`]); speed and position
//! follow from nonlinear observers ([`mech`]); the estimates close the loop
//! through certainty-equivalence controllers ([`control`]). [`harness`] wires
//! everything into reproducible scenario runs.

pub mod control;
pub mod drem;
pub mod error;
pub mod harness;
pub mod mech;
pub mod pebo;
pub mod plant;
pub mod signals;

pub use error::{Error, Result};
