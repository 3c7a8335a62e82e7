//! Spin-glass instance generation, blocked Gibbs annealing, Boltzmann
//! reference statistics and inverse-temperature estimation.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod reference;
pub mod topology;

pub use error::{Error, Result};
pub use model::{Edge, IsingModel, ModelMeta, SampleSet, SpinState};
