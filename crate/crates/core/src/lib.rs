//! Simulation, optimal control and benchmarking for variable impedance
//! actuators fitted with a hybrid dynamic/regenerative damping module.

pub mod benchmark;
pub mod circuit;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod export;
pub mod ilqr;
pub mod stats;

pub use error::{Error, Result};
