//! Learning the PSD kernels of an experiment.

use std::time::Instant;

use nalgebra::DVector;
use psdfilter_core::learning::{hyperparams_from_epsilon, learn_rank_one};
use psdfilter_core::metrics::sup_error;
use psdfilter_core::serialization::Model;
use psdfilter_core::{Domain, EpsilonSchedule, GaussianPsdModel, LearnConfig, TensorGrid, VariableGroups};

use crate::config::{ExplicitLearn, Experiment};
use crate::error::CliError;
use crate::output::{opt, write_atomic};

/// Points used for the sup-error column.
const SUP_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Transition,
    Observation,
    Initial,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Transition, Kernel::Observation, Kernel::Initial];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Transition => "transition",
            Kernel::Observation => "observation",
            Kernel::Initial => "initial",
        }
    }

    fn seed_offset(self) -> u64 {
        match self {
            Kernel::Transition => 0,
            Kernel::Observation => 1,
            Kernel::Initial => 2,
        }
    }
}

/// Learned transition over `("u", "x")`, observation over `("x", "y")` and the normalized initial law over `"x"`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModels {
    pub transition: GaussianPsdModel,
    pub observation: GaussianPsdModel,
    pub initial: GaussianPsdModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnRow {
    pub kernel: Kernel,
    pub epsilon: Option<f64>,
    pub m: usize,
    pub n: usize,
    pub sup_error: f64,
    pub wall_ns: u64,
}

impl Experiment {
    /// Learning box and variable groups of each kernel.
    pub fn kernel_space(&self, kernel: Kernel) -> (Domain, VariableGroups) {
        let b = self.state_box();
        let (d, dy) = (self.scenario.hmm.state_dim(), self.scenario.hmm.obs_dim());
        let groups = |spec: &[(&str, usize)]| VariableGroups::new(spec.iter().copied()).expect("distinct group names");
        match kernel {
            Kernel::Transition => (b.product(&b), groups(&[("u", d), ("x", d)])),
            Kernel::Observation => {
                // bundled observations live on the state box (bounded scenarios) or the oracle box
                let y = Domain::Hypercube(vec![b.bounds(0).expect("state box"); dy]);
                (b.product(&y), groups(&[("x", d), ("y", dy)]))
            }
            Kernel::Initial => (b, groups(&[("x", d)])),
        }
    }

    pub fn learn_config(&self, kernel: Kernel) -> Result<LearnConfig, CliError> {
        let (domain, groups) = self.kernel_space(kernel);
        let l = &self.config.learn;
        let seed = l.seed.wrapping_mul(3).wrapping_add(kernel.seed_offset());
        let explicit = match kernel {
            Kernel::Transition => &l.transition,
            Kernel::Observation => &l.observation,
            Kernel::Initial => &l.initial,
        };
        let cfg = match explicit {
            Some(ExplicitLearn {
                m,
                n,
                precision,
                regularization,
            }) => LearnConfig {
                n: *n,
                m: *m,
                precision: DVector::from_vec(precision.expand(groups.dim())?),
                regularization: *regularization,
                domain,
                seed,
            },
            None => {
                let schedule = EpsilonSchedule {
                    epsilon: l.epsilon,
                    beta: l.beta.unwrap_or(self.scenario.beta),
                    dim: groups.dim(),
                    c_m: l.c_m,
                    c_n: l.c_n,
                };
                hyperparams_from_epsilon(&schedule, &domain, seed).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    fn target(&self, kernel: Kernel) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
        let hmm = &self.scenario.hmm;
        let d = hmm.state_dim();
        move |z: &[f64]| match kernel {
            Kernel::Transition => hmm.transition.density(&z[..d], &z[d..]),
            Kernel::Observation => hmm.observation.density(&z[..d], &z[d..]),
            Kernel::Initial => hmm.initial.density(&[], z),
        }
    }

    /// Fits one kernel; the initial law is normalized on the state box.
    pub fn learn_kernel(&self, kernel: Kernel) -> Result<(GaussianPsdModel, LearnRow), CliError> {
        let cfg = self.learn_config(kernel)?;
        let (domain, groups) = self.kernel_space(kernel);
        let target = self.target(kernel);
        let start = Instant::now();
        let mut model = learn_rank_one(&target, &cfg)?.with_groups(groups)?;
        if kernel == Kernel::Initial {
            model = model.normalize(&domain)?.0;
        }
        let wall = start.elapsed().as_nanos() as u64;
        let per_dim = ((SUP_POINTS as f64).powf(1.0 / cfg.precision.len() as f64).floor() as usize).max(2);
        let points = TensorGrid::new(&domain, per_dim)?.points();
        let sup = sup_error(&|x: &[f64]| model.evaluate(x).unwrap_or(f64::NAN), &target, &points);
        let explicit = match kernel {
            Kernel::Transition => self.config.learn.transition.is_some(),
            Kernel::Observation => self.config.learn.observation.is_some(),
            Kernel::Initial => self.config.learn.initial.is_some(),
        };
        let row = LearnRow {
            kernel,
            epsilon: (!explicit).then_some(self.config.learn.epsilon),
            m: cfg.m,
            n: cfg.n,
            sup_error: sup,
            wall_ns: if self.config.timing { wall } else { 0 },
        };
        Ok((model, row))
    }

    pub fn learn_models(&self) -> Result<(LearnedModels, Vec<LearnRow>), CliError> {
        let (transition, a) = self.learn_kernel(Kernel::Transition)?;
        let (observation, b) = self.learn_kernel(Kernel::Observation)?;
        let (initial, c) = self.learn_kernel(Kernel::Initial)?;
        Ok((
            LearnedModels {
                transition,
                observation,
                initial,
            },
            vec![a, b, c],
        ))
    }

    /// Models from `[models]` when given, learned otherwise.
    pub fn models(&self) -> Result<LearnedModels, CliError> {
        let Some(paths) = &self.config.models else {
            return Ok(self.learn_models()?.0);
        };
        let read = |p: &std::path::Path| Model::read(p).and_then(Model::into_psd).map_err(|e| CliError::Config(e.to_string()));
        let initial = match &paths.initial {
            Some(p) => read(p)?,
            None => self.learn_kernel(Kernel::Initial)?.0,
        };
        Ok(LearnedModels {
            transition: read(&paths.transition)?,
            observation: read(&paths.observation)?,
            initial,
        })
    }
}

pub fn learn_csv(exp: &Experiment, rows: &[LearnRow]) -> String {
    let mut out = exp.hash_line();
    out.push_str("kernel,epsilon,M,n,grid_sup_error,wall_ns\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:e},{}\n",
            r.kernel.name(),
            opt(r.epsilon),
            r.m,
            r.n,
            r.sup_error,
            r.wall_ns
        ));
    }
    out
}

/// Learns `Q̂`, `Ĝ` and the initial fit; writes `models/*.json` and `learn.csv` under the output directory.
pub fn cmd_learn(exp: &Experiment) -> Result<(LearnedModels, Vec<LearnRow>), CliError> {
    let (models, rows) = exp.learn_models()?;
    let dir = exp.out_dir().join("models");
    for (kernel, model) in Kernel::ALL.iter().zip([&models.transition, &models.observation, &models.initial]) {
        let json = Model::Psd(model.clone()).to_json()?;
        write_atomic(&dir.join(format!("{}.json", kernel.name())), &json)?;
    }
    write_atomic(&exp.out_dir().join("learn.csv"), &learn_csv(exp, &rows))?;
    Ok((models, rows))
}
