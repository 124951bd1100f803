//! Simulation-based stability estimation for ensemble feature selectors.
//!
//! A real selector (random-forest importance) is run a handful of times to calibrate a
//! two-parameter simulated weak selector (`n_useful`, `p`). The stability of ensembles
//! of any size is then estimated by ensembling the cheap simulator instead of the
//! real selector.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod estimation;
pub mod forest;
pub mod rng;
pub mod selectors;
pub mod stability;
pub mod theory;
pub mod types;

pub use error::{Error, LoadError, Result};
pub use rng::{make_stream, RngStream};
pub use types::{
    ExecutionCounter, ExecutionCounts, FeatureRanking, FeatureSubset, SimulatorParams,
};
