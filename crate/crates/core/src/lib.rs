//! Sphere–plate Casimir force between gold surfaces from Lifshitz theory, with
//! the electrostatic calibration chain and precision statistics used to
//! compare theory against approach-curve measurements.
//!
//! All internal quantities are SI. Photon energies and imaginary frequencies
//! are in eV inside [`optics`] only.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod corrections;
pub mod electrostatics;
pub mod error;
pub mod fit;
pub mod interp;
pub mod io;
pub mod lifshitz;
pub mod optics;
mod parallel;
pub mod quadrature;
pub mod synth_materials;
pub mod synthetic;
pub mod theory;
pub mod units;

pub use error::{Error, Result};
