//! Experiment configuration.
//!
//! One TOML file per experiment:
//!
//! ```toml
//! scenario = "ar1"                  # bundled model id
//! methods = ["psd", "grid"]         # psd | generalized | kalman | particle | grid
//! steps = 50
//! seeds = [1, 2, 3]
//! grid = 1024                       # oracle cells per dimension, 0 disables the oracle
//! out = "results"
//! timing = false                    # write measured wall_ns instead of 0
//! prior = "initial"                 # psd prior: "initial" (learned ν) or "uniform"
//!
//! [learn]                           # ε-driven schedule for every learned kernel
//! epsilon = 0.1
//! beta = 2.0                        # defaults to the scenario's smoothness
//! c_m = 1.0
//! c_n = 1.0
//! seed = 0
//!
//! [learn.transition]                # explicit settings replace the schedule for one kernel
//! m = 20
//! n = 160
//! precision = 4.0
//! regularization = 1e-8
//!
//! [models]                          # previously learned kernels (paths relative to the config)
//! transition = "models/transition.json"
//! observation = "models/observation.json"
//!
//! [particle]
//! n = 10000
//!
//! [generalized]
//! target_order = 12
//! radius = 3.0
//! epsilon = 1e-4
//!
//! [stability]
//! a = { kind = "uniform" }
//! b = { kind = "gaussian", mean = [0.8], std = 0.1 }
//! fit = [2, 20]
//! mixing_grid = 100
//! ```
//!
//! The config hash is FNV-1a 64 of the canonical form: the parsed document without `out`,
//! re-serialized with sorted keys, so formatting, comments and the output location do not change it.

use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use psdfilter_core::scenarios::{scenario, Scenario, SCENARIO_IDS};
use psdfilter_core::{Domain, Method};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub prior: PriorKind,
    /// Half-width of the oracle box for scenarios on all of space.
    #[serde(default = "default_oracle_box")]
    pub oracle_box: f64,
    #[serde(default)]
    pub learn: LearnSection,
    #[serde(default)]
    pub models: Option<ModelPaths>,
    #[serde(default)]
    pub particle: ParticleSection,
    #[serde(default)]
    pub generalized: GeneralizedSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    #[default]
    Initial,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub beta: Option<f64>,
    #[serde(default = "one")]
    pub c_m: f64,
    #[serde(default = "one")]
    pub c_n: f64,
    #[serde(default)]
    pub seed: u64,
    pub transition: Option<ExplicitLearn>,
    pub observation: Option<ExplicitLearn>,
    pub initial: Option<ExplicitLearn>,
}

impl Default for LearnSection {
    fn default() -> Self {
        LearnSection {
            epsilon: default_epsilon(),
            beta: None,
            c_m: 1.0,
            c_n: 1.0,
            seed: 0,
            transition: None,
            observation: None,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitLearn {
    pub m: usize,
    pub n: usize,
    pub precision: Precision,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Precision {
    Scalar(f64),
    PerCoordinate(Vec<f64>),
}

impl Precision {
    pub fn expand(&self, d: usize) -> Result<Vec<f64>, CliError> {
        match self {
            Precision::Scalar(v) => Ok(vec![*v; d]),
            Precision::PerCoordinate(v) if v.len() == d => Ok(v.clone()),
            Precision::PerCoordinate(v) => Err(CliError::Config(format!(
                "precision has {} entries, the kernel has {d} coordinates",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub transition: PathBuf,
    pub observation: PathBuf,
    pub initial: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    #[serde(default = "default_particles")]
    pub n: usize,
}

impl Default for ParticleSection {
    fn default() -> Self {
        ParticleSection { n: default_particles() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizedSection {
    #[serde(default = "default_target_order")]
    pub target_order: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_kalman_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_samples_per_anchor")]
    pub samples_per_anchor: usize,
}

impl Default for GeneralizedSection {
    fn default() -> Self {
        GeneralizedSection {
            target_order: default_target_order(),
            radius: default_radius(),
            epsilon: default_kalman_epsilon(),
            samples_per_anchor: default_samples_per_anchor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Uniform,
    /// Learned fit of the scenario's initial law.
    Initial,
    Gaussian { mean: Vec<f64>, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub a: InitSpec,
    pub b: InitSpec,
    /// Inclusive step range of the log-linear fit.
    pub fit: (usize, usize),
    pub mixing_grid: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            a: InitSpec::Uniform,
            b: InitSpec::Gaussian { mean: vec![0.8], std: 0.1 },
            fit: (2, 20),
            mixing_grid: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { repeats: default_repeats() }
    }
}

fn default_methods() -> Vec<String> {
    vec!["psd".into()]
}
fn default_steps() -> usize {
    50
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_grid() -> usize {
    1024
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_oracle_box() -> f64 {
    4.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}
fn default_particles() -> usize {
    10_000
}
fn default_target_order() -> usize {
    12
}
fn default_radius() -> f64 {
    3.0
}
fn default_kalman_epsilon() -> f64 {
    1e-4
}
fn default_samples_per_anchor() -> usize {
    4
}
fn default_repeats() -> usize {
    5
}

/// A validated configuration together with its hash and resolved scenario.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: u64,
    pub methods: Vec<Method>,
    pub scenario: Scenario,
    /// Directory relative paths in the config are resolved against.
    pub base: PathBuf,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub grid: Option<usize>,
}

pub fn canonical_hash(text: &str) -> Result<u64, CliError> {
    let mut value: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    value.remove("out");
    let canonical = toml::to_string(&value).map_err(|e| CliError::Config(e.to_string()))?;
    let mut h = FnvHasher::default();
    h.write(canonical.as_bytes());
    Ok(h.finish())
}

impl Experiment {
    pub fn from_toml(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(out) = &overrides.out {
            config.out = out.clone();
        }
        if let Some(seeds) = &overrides.seeds {
            config.seeds = seeds.clone();
            table.insert("seeds".into(), toml::Value::Array(seeds.iter().map(|&s| toml::Value::Integer(s as i64)).collect()));
        }
        if let Some(grid) = overrides.grid {
            config.grid = grid;
            table.insert("grid".into(), toml::Value::Integer(grid as i64));
        }
        let hash = canonical_hash(&toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?)?;
        Self::validate(config, hash, base)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base, overrides)
    }

    fn validate(mut config: ExperimentConfig, hash: u64, base: &Path) -> Result<Self, CliError> {
        let scenario = scenario(&config.scenario).map_err(|_| {
            CliError::Config(format!("unknown scenario `{}` (known: {})", config.scenario, SCENARIO_IDS.join(", ")))
        })?;
        if config.methods.is_empty() {
            return Err(CliError::Config("at least one method is required".into()));
        }
        let methods = config
            .methods
            .iter()
            .map(|m| Method::parse(m).map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if config.steps == 0 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }
        if config.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        let bounded = matches!(scenario.hmm.domain, Domain::Hypercube(_));
        for m in &methods {
            match m {
                Method::Psd if !bounded => {
                    return Err(CliError::Config(format!("method psd needs a bounded state space; `{}` has none", scenario.id)))
                }
                Method::Generalized | Method::Kalman if scenario.linear.is_none() => {
                    return Err(CliError::Config(format!("method {m} needs a linear-Gaussian scenario")))
                }
                Method::Grid if config.grid == 0 => return Err(CliError::Config("method grid needs grid > 0".into())),
                _ => {}
            }
        }
        if !(config.oracle_box > 0.0) {
            return Err(CliError::Config("oracle_box must be positive".into()));
        }
        if config.particle.n == 0 {
            return Err(CliError::Config("particle.n must be positive".into()));
        }
        if config.bench.repeats == 0 {
            return Err(CliError::Config("bench.repeats must be positive".into()));
        }
        let (lo, hi) = config.stability.fit;
        if lo == 0 || lo > hi {
            return Err(CliError::Config("stability.fit must be a range 1 ≤ lo ≤ hi".into()));
        }
        if let Some(models) = &mut config.models {
            for p in [Some(&mut models.transition), Some(&mut models.observation), models.initial.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.exists() {
                    return Err(CliError::Config(format!("model file {} does not exist", p.display())));
                }
            }
        }
        Ok(Experiment {
            config,
            hash,
            methods,
            scenario,
            base: base.to_path_buf(),
        })
    }

    /// Output directory, relative paths resolved against the working directory.
    pub fn out_dir(&self) -> &Path {
        &self.config.out
    }

    /// `# config_hash=...` line that opens every CSV.
    pub fn hash_line(&self) -> String {
        format!("# config_hash={:016x}\n", self.hash)
    }

    /// State box used by the learner and the oracle.
    pub fn state_box(&self) -> Domain {
        match &self.scenario.hmm.domain {
            Domain::Hypercube(b) => Domain::Hypercube(b.clone()),
            Domain::Whole => {
                let r = self.config.oracle_box;
                Domain::Hypercube(vec![(-r, r); self.scenario.hmm.state_dim()])
            }
        }
    }
}
