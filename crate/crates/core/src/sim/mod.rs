//! Discrete-event simulation core.

pub mod engine;
pub mod event;
pub mod mobility;
pub mod radio;
pub mod rng;

pub use engine::{run, RunOutcome, SimError, SimOptions, Simulation};
