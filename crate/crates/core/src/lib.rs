pub mod agent;
pub mod channel;
pub mod checks;
pub mod config;
pub mod env;
pub mod envelope;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod objectives;
pub mod parallel;
pub mod pareto;
pub mod replay;
pub mod rng;
pub mod run;
pub mod scalar;
pub mod synthetic;
pub mod traffic;

pub use error::{Error, Result};
