//! Filtering recursions: the closed-form PSD filter for both model families and the
//! Kalman, bootstrap particle and dense grid baselines.

mod generalized;
mod grid;
mod kalman;
mod particle;
mod psd;
mod trace;

pub use generalized::{generalized_filter_run, GeneralizedFilterConfig};
pub use grid::{grid_filter_run, GridTransition, DEFAULT_CELL_CAP};
pub use kalman::{kalman_filter_run, kalman_step, KalmanState};
pub use particle::{particle_filter_run, ParticleCloud};
pub use psd::{psd_filter_run, psd_filter_step};
pub use trace::{FilterTrace, Method, Posterior, StepRecord};
