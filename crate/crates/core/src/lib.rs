//! Predictive video streaming over cellular downlinks with base-station
//! deep sleep: scenario setup, link prediction, airtime and quality
//! planning, exact and heuristic solvers, and playback simulation.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod heuristic;
pub mod lp;
pub mod milp;
pub mod mobility;
pub mod plan;
pub mod playback;
pub mod power;
pub mod radio;
pub mod scenario;

pub use error::{Error, Result};
