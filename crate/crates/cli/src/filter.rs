//! Filter runs against the grid oracle of the true kernels.

use std::path::PathBuf;

use psdfilter_core::filtering::{
    generalized_filter_run, grid_filter_run, kalman_filter_run, particle_filter_run, psd_filter_run, GeneralizedFilterConfig,
    GridTransition, DEFAULT_CELL_CAP,
};
use psdfilter_core::generalized::{kalman_component, CompressConfig};
use psdfilter_core::{Domain, FilterTrace, GaussianPsdModel, GeneralizedPsdModel, GridDensity, Method, Posterior, TensorGrid, Trajectory};
use rayon::prelude::*;

use crate::config::{Experiment, PriorKind};
use crate::error::CliError;
use crate::learn::LearnedModels;
use crate::output::{opt, write_atomic};

/// Everything a set of filter runs shares: kernels and the oracle grid.
pub struct FilterContext<'a> {
    pub exp: &'a Experiment,
    pub learned: Option<LearnedModels>,
    pub oracle_grid: Option<TensorGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub trace: FilterTrace,
    /// Per-step TV to the oracle, `None` when there is no oracle.
    pub tv: Vec<Option<f64>>,
}

impl RunResult {
    pub fn max_tv(&self) -> Option<f64> {
        self.tv.iter().skip(1).flatten().copied().reduce(f64::max)
    }

    pub fn mean_tv(&self) -> Option<f64> {
        let v: Vec<f64> = self.tv.iter().skip(1).flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn total_wall_ns(&self) -> u64 {
        self.trace.steps.iter().map(|s| s.wall_ns).sum()
    }
}

/// `ν` on the grid, normalized by the midpoint rule.
fn grid_initial(exp: &Experiment, grid: &TensorGrid) -> Result<GridDensity, CliError> {
    let nu = &exp.scenario.hmm.initial;
    Ok(GridDensity::from_fn(grid.clone(), |x| nu.density(&[], x))?.normalized()?.0)
}

/// TV of a posterior to a grid density, histogramming particle clouds.
pub fn tv_to_grid(p: &Posterior, oracle: &GridDensity) -> Result<f64, CliError> {
    let grid = oracle.grid().clone();
    let on_grid = match p {
        Posterior::Particles(c) => GridDensity::histogram(grid, &c.particles, &c.weights)?,
        Posterior::Grid(g) => g.clone(),
        other => GridDensity::try_from_fn(grid, |x| {
            other
                .density(x)
                .ok_or_else(|| psdfilter_core::Error::InvalidParameter("posterior has no density".into()))
        })?,
    };
    Ok(on_grid.tv(oracle)?)
}

impl<'a> FilterContext<'a> {
    pub fn new(exp: &'a Experiment) -> Result<Self, CliError> {
        let learned = if exp.methods.contains(&Method::Psd) { Some(exp.models()?) } else { None };
        let oracle_grid = if exp.config.grid > 0 {
            let grid = TensorGrid::new(&exp.state_box(), exp.config.grid)?;
            if grid.len() > DEFAULT_CELL_CAP {
                return Err(CliError::Config(format!(
                    "oracle grid of {} cells exceeds the cap of {DEFAULT_CELL_CAP}",
                    grid.len()
                )));
            }
            Some(grid)
        } else {
            None
        };
        Ok(FilterContext { exp, learned, oracle_grid })
    }

    /// Grid Bayes filter of the true kernels.
    pub fn oracle(&self, observations: &[Vec<f64>]) -> Result<Option<FilterTrace>, CliError> {
        let Some(grid) = &self.oracle_grid else { return Ok(None) };
        let hmm = &self.exp.scenario.hmm;
        let prior = grid_initial(self.exp, grid)?;
        let lik = |x: &[f64], y: &[f64]| hmm.observation.density(x, y);
        Ok(Some(grid_filter_run(&prior, GridTransition::Kernel(&hmm.transition), &lik, observations, DEFAULT_CELL_CAP)?))
    }

    pub fn psd_prior(&self) -> Result<GaussianPsdModel, CliError> {
        let learned = self.learned.as_ref().expect("psd runs have learned models");
        Ok(match self.exp.config.prior {
            PriorKind::Initial => learned.initial.clone(),
            PriorKind::Uniform => GaussianPsdModel::uniform(&self.exp.state_box(), "x")?,
        })
    }

    /// Order-one generalized kernels from the exact linear-Gaussian model.
    pub fn generalized_kernels(&self) -> Result<(GeneralizedPsdModel, GeneralizedPsdModel, GeneralizedPsdModel), CliError> {
        let lg = self.exp.scenario.linear.as_ref().expect("validated linear scenario");
        let g = &self.exp.config.generalized;
        let (q, _) = kalman_component(&lg.transition()?, g.radius, g.epsilon)?;
        let q = q.rename_group("x", "u")?.rename_group("y", "x")?;
        let (obs, _) = kalman_component(&lg.observation()?, g.radius, g.epsilon)?;
        let prior = GeneralizedPsdModel::gaussian(&lg.m0, &lg.p0)?;
        Ok((prior, q, obs))
    }

    /// One filter run; `particles` overrides the configured cloud size.
    pub fn run_method(&self, method: Method, seed: u64, obs: &[Vec<f64>], particles: Option<usize>) -> Result<FilterTrace, CliError> {
        let exp = self.exp;
        let hmm = &exp.scenario.hmm;
        Ok(match method {
            Method::Psd => {
                let m = self.learned.as_ref().expect("psd runs have learned models");
                psd_filter_run(&self.psd_prior()?, &m.transition, &m.observation, obs, &exp.state_box())?
            }
            Method::Generalized => {
                let (prior, q, g) = self.generalized_kernels()?;
                let gc = &exp.config.generalized;
                let d = hmm.state_dim();
                let mut compress = CompressConfig::new(gc.target_order);
                compress.samples_per_anchor = gc.samples_per_anchor;
                let cfg = GeneralizedFilterConfig {
                    compress,
                    domain: Domain::Hypercube(vec![(-gc.radius, gc.radius); d]),
                    seed,
                };
                generalized_filter_run(&prior, &q, &g, obs, &cfg)?
            }
            Method::Kalman => kalman_filter_run(exp.scenario.linear.as_ref().expect("validated linear scenario"), obs)?,
            Method::Particle => particle_filter_run(hmm, particles.unwrap_or(exp.config.particle.n), obs, seed)?,
            Method::Grid => self.oracle(obs)?.expect("grid method requires the oracle grid"),
        })
    }

    pub fn tv_column(&self, trace: &FilterTrace, oracle: Option<&FilterTrace>) -> Result<Vec<Option<f64>>, CliError> {
        let Some(oracle) = oracle else { return Ok(vec![None; trace.len()]) };
        trace
            .steps
            .par_iter()
            .zip(&oracle.steps)
            .map(|(s, o)| {
                let Posterior::Grid(o) = &o.posterior else { unreachable!("oracle posteriors are grid densities") };
                tv_to_grid(&s.posterior, o).map(Some)
            })
            .collect()
    }
}

pub fn trajectory(exp: &Experiment, seed: u64) -> Result<Trajectory, CliError> {
    Ok(exp.scenario.hmm.simulate(exp.config.steps, seed)?)
}

pub fn trace_path(exp: &Experiment, method: Method, seed: u64) -> PathBuf {
    exp.out_dir().join(format!("filter_{method}_seed{seed}.csv"))
}

pub fn summary_csv(exp: &Experiment, runs: &[RunResult]) -> String {
    let mut out = exp.hash_line();
    out.push_str("method,seed,steps,order_or_N,max_tv,mean_tv,log_evidence,total_wall_ns\n");
    for r in runs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:e},{}\n",
            r.method,
            r.seed,
            r.trace.len(),
            r.trace.last().size(),
            opt(r.max_tv()),
            opt(r.mean_tv()),
            r.trace.log_evidence(),
            if exp.config.timing { r.total_wall_ns() } else { 0 }
        ));
    }
    out
}

/// Runs every configured method for every seed; writes one CSV per run, the simulated
/// trajectories and `filter_summary.csv`.
pub fn cmd_filter(exp: &Experiment) -> Result<Vec<RunResult>, CliError> {
    let ctx = FilterContext::new(exp)?;
    let per_seed = exp
        .config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<RunResult>, CliError> {
            let traj = trajectory(exp, seed)?;
            write_atomic(&exp.out_dir().join(format!("trajectory_seed{seed}.csv")), &(exp.hash_line() + &traj.to_csv()))?;
            let oracle = ctx.oracle(&traj.observations)?;
            exp.methods
                .par_iter()
                .map(|&method| {
                    let trace = ctx.run_method(method, seed, &traj.observations, None)?;
                    let tv = ctx.tv_column(&trace, oracle.as_ref())?;
                    write_atomic(&trace_path(exp, method, seed), &(exp.hash_line() + &trace.to_csv(&tv, exp.config.timing)))?;
                    Ok(RunResult { method, seed, trace, tv })
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let runs: Vec<RunResult> = per_seed.into_iter().flatten().collect();
    write_atomic(&exp.out_dir().join("filter_summary.csv"), &summary_csv(exp, &runs))?;
    Ok(runs)
}
