//! Numerical workbench for resonant four-wave kinetics with dissipation and
//! random forcing.
//!
//! The library is organised bottom-up: model data, integer geometry of the
//! resonance quadrics, surface quadrature, memory kernels, the kinetic
//! operator, the kinetic-equation solver, the stochastic side and the
//! diagram engine. The `wavekin` binary wires them into subcommands.

pub mod cache;
pub mod cli;
pub mod diagrams;
pub mod error;
pub mod kernels;
pub mod kinetic;
pub mod lattice;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod stochastic;
pub mod sum;
pub mod wke;
pub mod zeta;

pub use error::{Error, Result};
pub use model::{ForcingProfile, ModelParams};
