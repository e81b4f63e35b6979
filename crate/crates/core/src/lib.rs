//! Markovian quantum neuroevolution: gate-block libraries, block graphs,
//! statevector simulation, classifier training and circuit evolution.

pub mod blockgraph;
pub mod datasets;
pub mod error;
pub mod evolution;
pub mod gateblock;
pub mod simulator;
pub mod trainer;

pub use error::{Error, Result};
