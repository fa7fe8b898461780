use std::fmt;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::generalized::GeneralizedPsdModel;
use crate::grid::GridDensity;
use crate::psd::GaussianPsdModel;

use super::kalman::KalmanState;
use super::particle::ParticleCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Psd,
    Generalized,
    Kalman,
    Particle,
    Grid,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Psd, Method::Generalized, Method::Kalman, Method::Particle, Method::Grid];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Psd => "psd",
            Method::Generalized => "generalized",
            Method::Kalman => "kalman",
            Method::Particle => "particle",
            Method::Grid => "grid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown filter method `{s}`")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Posterior {
    Psd(GaussianPsdModel),
    Generalized(GeneralizedPsdModel),
    Kalman(KalmanState),
    Particles(ParticleCloud),
    Grid(GridDensity),
}

impl Posterior {
    /// Model order, particle count, or number of grid cells.
    pub fn size(&self) -> usize {
        match self {
            Posterior::Psd(m) => m.order(),
            Posterior::Generalized(m) => m.order(),
            Posterior::Kalman(_) => 1,
            Posterior::Particles(c) => c.len(),
            Posterior::Grid(g) => g.grid().len(),
        }
    }

    /// Posterior mean; PSD models use `domain`, generalized models integrate over all of space.
    pub fn mean(&self, domain: &Domain) -> Result<Vec<f64>> {
        match self {
            Posterior::Psd(m) => m.mean(domain),
            Posterior::Generalized(m) => Ok(m.mean()?.iter().copied().collect()),
            Posterior::Kalman(k) => Ok(k.mean.iter().copied().collect()),
            Posterior::Particles(c) => Ok(c.mean()),
            Posterior::Grid(g) => Ok(g.mean()),
        }
    }

    /// Density at `x`; `None` for particle clouds.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            Posterior::Psd(m) => m.evaluate(x).ok(),
            Posterior::Generalized(m) => m.evaluate(x).ok(),
            Posterior::Kalman(k) => Some(k.density(x)),
            Posterior::Particles(_) => None,
            Posterior::Grid(g) => Some(g.evaluate(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub posterior: Posterior,
    /// `log Z_k`, zero for the initial entry.
    pub log_z: f64,
    pub order: usize,
    pub wall_ns: u64,
}

/// Entry `k` is the filter after `k` observations; entry 0 is the initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub method: Method,
    pub steps: Vec<StepRecord>,
}

impl FilterTrace {
    pub(crate) fn new(method: Method, initial: Posterior) -> Self {
        let order = initial.size();
        FilterTrace {
            method,
            steps: vec![StepRecord {
                posterior: initial,
                log_z: 0.0,
                order,
                wall_ns: 0,
            }],
        }
    }

    pub(crate) fn push(&mut self, posterior: Posterior, log_z: f64, wall_ns: u64) {
        let order = posterior.size();
        self.steps.push(StepRecord {
            posterior,
            log_z,
            order,
            wall_ns,
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn orders(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.order).collect()
    }

    pub fn last(&self) -> &Posterior {
        &self.steps.last().expect("trace holds the initial entry").posterior
    }

    /// Sum of `log Z_k`, the log marginal likelihood of the observations under the filter's model.
    pub fn log_evidence(&self) -> f64 {
        self.steps.iter().map(|s| s.log_z).sum()
    }

    /// CSV with columns `step,method,order_or_N,Z,tv_to_oracle,wall_ns`.
    ///
    /// `tv` holds one optional value per step; `wall_ns` is written as 0 unless `timing` is set,
    /// so that repeated runs produce identical files.
    pub fn to_csv(&self, tv: &[Option<f64>], timing: bool) -> String {
        let mut out = String::from("step,method,order_or_N,Z,tv_to_oracle,wall_ns\n");
        for (k, s) in self.steps.iter().enumerate() {
            let tv = tv.get(k).copied().flatten().map_or(String::new(), |v| format!("{v:e}"));
            out.push_str(&format!(
                "{k},{},{},{:e},{tv},{}\n",
                self.method,
                s.order,
                s.log_z.exp(),
                if timing { s.wall_ns } else { 0 }
            ));
        }
        out
    }
}
