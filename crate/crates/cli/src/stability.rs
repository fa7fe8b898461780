//! Forgetting of the initial condition by the PSD filter.

use nalgebra::{DMatrix, DVector};
use psdfilter_core::filtering::psd_filter_run;
use psdfilter_core::hmm::estimate_mixing_over;
use psdfilter_core::metrics::birkhoff_bound;
use psdfilter_core::{GaussianPsdModel, GridDensity, TensorGrid};
use rayon::prelude::*;

use crate::config::{Experiment, InitSpec};
use crate::error::CliError;
use crate::filter::trajectory;
use crate::learn::LearnedModels;
use crate::output::{opt, write_atomic};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRun {
    pub seed: u64,
    /// `TV(π̂_k^a, π̂_k^b)` for `k = 0..=T`.
    pub tv: Vec<f64>,
    /// Smallest mixing constant of the true optimal kernels over the observations.
    pub sigma: f64,
    pub birkhoff: f64,
    /// Least-squares slope of `log TV` over the fit range; `None` when fewer than two positive values.
    pub slope: Option<f64>,
}

impl StabilityRun {
    /// `slope ≤ log τ(σ̂) + 0.5`; vacuous when the two runs coincide.
    pub fn within_bound(&self) -> bool {
        self.slope.is_none_or(|s| s <= self.birkhoff.ln() + 0.5)
    }
}

/// Least-squares slope of `(x, y)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `τ(σ)`, equal to 1 for a kernel that does not mix on the grid.
fn contraction(sigma: f64) -> Result<f64, CliError> {
    Ok(if sigma > 0.0 { birkhoff_bound(sigma.min(1.0))? } else { 1.0 })
}

pub fn init_model(exp: &Experiment, spec: &InitSpec, learned: &LearnedModels) -> Result<GaussianPsdModel, CliError> {
    let domain = exp.state_box();
    let d = exp.scenario.hmm.state_dim();
    Ok(match spec {
        InitSpec::Uniform => GaussianPsdModel::uniform(&domain, "x")?,
        InitSpec::Initial => learned.initial.clone(),
        InitSpec::Gaussian { mean, std } => {
            if mean.len() != d || !(*std > 0.0) {
                return Err(CliError::Config(format!("gaussian init needs a mean of length {d} and std > 0")));
            }
            let means = DMatrix::from_row_slice(1, d, mean);
            let eta = DVector::from_element(d, 0.5 / (std * std));
            GaussianPsdModel::from_gmm(&[1.0], &means, &eta)?.normalize(&domain)?.0
        }
    })
}

/// Two PSD runs from `stability.a` and `stability.b` on the same observations; TV by the
/// midpoint rule on the oracle grid.
pub fn stability_run(exp: &Experiment, learned: &LearnedModels, seed: u64) -> Result<StabilityRun, CliError> {
    let s = &exp.config.stability;
    let domain = exp.state_box();
    let traj = trajectory(exp, seed)?;
    let obs = &traj.observations;
    let a = psd_filter_run(&init_model(exp, &s.a, learned)?, &learned.transition, &learned.observation, obs, &domain)?;
    let b = psd_filter_run(&init_model(exp, &s.b, learned)?, &learned.transition, &learned.observation, obs, &domain)?;
    let grid = TensorGrid::new(&domain, exp.config.grid)?;
    let tv = a
        .steps
        .par_iter()
        .zip(&b.steps)
        .map(|(p, q)| {
            let ga = GridDensity::try_from_fn(grid.clone(), |x| p.posterior.density(x).ok_or(psdfilter_core::Error::DegenerateMass { mass: 0.0 }))?;
            let gb = GridDensity::try_from_fn(grid.clone(), |x| q.posterior.density(x).ok_or(psdfilter_core::Error::DegenerateMass { mass: 0.0 }))?;
            ga.tv(&gb)
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let d = exp.scenario.hmm.state_dim();
    let per_dim = ((s.mixing_grid as f64).powf(1.0 / d as f64).floor() as usize).max(2);
    let points = TensorGrid::new(&domain, per_dim)?.points();
    let sigma = estimate_mixing_over(&exp.scenario.hmm, obs, &points, &points)?;
    let birkhoff = contraction(sigma)?;

    let (lo, hi) = s.fit;
    let fit: Vec<(f64, f64)> = (lo..=hi.min(exp.config.steps))
        .filter(|&k| tv[k] > 0.0)
        .map(|k| (k as f64, tv[k].ln()))
        .collect();
    Ok(StabilityRun {
        seed,
        tv,
        sigma,
        birkhoff,
        slope: fit_slope(&fit),
    })
}

pub fn cmd_stability(exp: &Experiment) -> Result<Vec<StabilityRun>, CliError> {
    if exp.config.grid == 0 {
        return Err(CliError::Config("stability needs grid > 0".into()));
    }
    if !exp.scenario.hmm.domain.box_bounds().is_ok() {
        return Err(CliError::Config("stability runs the PSD filter and needs a bounded state space".into()));
    }
    let learned = exp.models()?;
    let runs = exp
        .config
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = stability_run(exp, &learned, seed)?;
            let mut csv = exp.hash_line();
            csv.push_str("step,tv\n");
            for (k, v) in run.tv.iter().enumerate() {
                csv.push_str(&format!("{k},{v:e}\n"));
            }
            write_atomic(&exp.out_dir().join(format!("stability_seed{seed}.csv")), &csv)?;
            Ok(run)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut csv = exp.hash_line();
    csv.push_str("seed,sigma,birkhoff_bound,log_bound,slope,within_bound\n");
    for r in &runs {
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{},{}\n",
            r.seed,
            r.sigma,
            r.birkhoff,
            r.birkhoff.ln(),
            opt(r.slope),
            r.within_bound()
        ));
    }
    write_atomic(&exp.out_dir().join("stability_summary.csv"), &csv)?;
    Ok(runs)
}
