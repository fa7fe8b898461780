//! Experiment driver: learns kernels, runs filters against a grid oracle and writes CSV reports.
//!
//! Every CSV starts with a `# config_hash=<16 hex digits>` line. Apart from `bench.csv`, outputs
//! depend only on the config and seeds, so re-running a command reproduces them byte for byte.

pub mod bench;
pub mod config;
pub mod error;
pub mod filter;
pub mod learn;
pub mod output;
pub mod stability;

pub use bench::cmd_bench;
pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::CliError;
pub use filter::cmd_filter;
pub use learn::cmd_learn;
pub use stability::cmd_stability;
