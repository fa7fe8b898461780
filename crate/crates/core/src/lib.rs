pub mod domain;
pub mod error;
pub mod filtering;
pub mod generalized;
pub mod grid;
pub mod hmm;
pub mod learning;
pub mod linalg;
pub mod metrics;
pub mod psd;
pub mod rng;
pub mod scenarios;
pub mod serialization;

pub use domain::{Domain, VariableGroups};
pub use error::{Error, Result};
pub use filtering::{FilterTrace, Method, Posterior};
pub use generalized::{Component, ConditionalGaussianLinear, GeneralizedPsdModel};
pub use grid::{GridDensity, TensorGrid};
pub use hmm::{DensityKernel, Hmm, Trajectory};
pub use learning::{EpsilonSchedule, LearnConfig};
pub use psd::GaussianPsdModel;
