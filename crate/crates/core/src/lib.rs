//! Spatial-concept learning and tidy-up planning.
//!
//! The crate learns where objects belong from multimodal observations (3D position, detected
//! class, spoken place words) with a multimodal Dirichlet-process mixture trained by blocked
//! Gibbs sampling, and plans tidy-up actions by greedily maximizing the likelihood ratio of
//! moving one object to the mean of its best concept. A seeded simulator scores episodes
//! under "Tidy Up Here" benchmark rules.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod planner;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
pub use model::{ConceptModel, Hyperparams, LabeledDataset, Observation, Position};
pub use nalgebra;
