//! Hidden Markov models given by density kernels, simulation, the optimal kernel
//! `R(u, x) = Q(u, x) G(x, y)`, and grid estimates of its mixing coefficient.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub type DensityFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&[f64], &mut dyn RngCore) -> Result<Vec<f64>> + Send + Sync>;

/// A kernel `K(u, ·)` with density `(u, x) ↦ K(u, x)` and an optional exact sampler.
/// An initial distribution is a kernel with `d_in = 0`.
#[derive(Clone)]
pub struct DensityKernel {
    name: &'static str,
    density: DensityFn,
    sampler: Option<SamplerFn>,
    d_in: usize,
    d_out: usize,
}

impl fmt::Debug for DensityKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityKernel")
            .field("name", &self.name)
            .field("d_in", &self.d_in)
            .field("d_out", &self.d_out)
            .field("sampler", &self.sampler.is_some())
            .finish()
    }
}

impl DensityKernel {
    pub fn new(name: &'static str, d_in: usize, d_out: usize, density: DensityFn) -> Self {
        DensityKernel {
            name,
            density,
            sampler: None,
            d_in,
            d_out,
        }
    }

    pub fn with_sampler(mut self, sampler: SamplerFn) -> Self {
        self.sampler = Some(sampler);
        self
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d_in, self.d_out)
    }

    pub fn has_sampler(&self) -> bool {
        self.sampler.is_some()
    }

    pub fn density(&self, u: &[f64], x: &[f64]) -> f64 {
        (self.density)(u, x)
    }

    pub fn density_fn(&self) -> DensityFn {
        self.density.clone()
    }

    pub fn sample(&self, u: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        match &self.sampler {
            Some(s) => s(u, rng),
            None => Err(Error::MissingSampler(self.name)),
        }
    }
}

/// Transition `Q: E → E`, observation `G: E → F`, initial law `ν` on `E`.
#[derive(Debug, Clone)]
pub struct Hmm {
    pub transition: DensityKernel,
    pub observation: DensityKernel,
    pub initial: DensityKernel,
    pub domain: Domain,
}

/// States `x_0..x_T` and observations `y_1..y_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// CSV with columns `t, x_0.., y_0..`; step 0 has no observation.
    pub fn to_csv(&self) -> String {
        let dx = self.states.first().map_or(0, |s| s.len());
        let dy = self.observations.first().map_or(0, |o| o.len());
        let mut out = String::from("t");
        for k in 0..dx {
            out.push_str(&format!(",x{k}"));
        }
        for k in 0..dy {
            out.push_str(&format!(",y{k}"));
        }
        out.push('\n');
        for (t, s) in self.states.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in s {
                out.push_str(&format!(",{v:e}"));
            }
            for k in 0..dy {
                if t == 0 {
                    out.push(',');
                } else {
                    out.push_str(&format!(",{:e}", self.observations[t - 1][k]));
                }
            }
            out.push('\n');
        }
        out
    }
}

impl Hmm {
    pub fn new(transition: DensityKernel, observation: DensityKernel, initial: DensityKernel, domain: Domain) -> Result<Self> {
        let d = transition.d_out;
        if transition.d_in != d || observation.d_in != d || initial.d_out != d || initial.d_in != 0 {
            return Err(Error::InvalidParameter(format!(
                "kernel dimensions do not chain: Q {:?}, G {:?}, initial {:?}",
                transition.dims(),
                observation.dims(),
                initial.dims()
            )));
        }
        domain.check_dim(d)?;
        Ok(Hmm {
            transition,
            observation,
            initial,
            domain,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.d_out
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.d_out
    }

    /// `x_0 ~ ν`, `x_t ~ Q(x_{t-1}, ·)`, `y_t ~ G(x_t, ·)` from the simulation substream of `seed`.
    pub fn simulate(&self, steps: usize, seed: u64) -> Result<Trajectory> {
        let mut rng = rng::substream(seed, stream::SIMULATION);
        let mut states = Vec::with_capacity(steps + 1);
        let mut observations = Vec::with_capacity(steps);
        let mut x = self.initial.sample(&[], &mut rng)?;
        states.push(x.clone());
        for _ in 0..steps {
            x = self.transition.sample(&x, &mut rng)?;
            observations.push(self.observation.sample(&x, &mut rng)?);
            states.push(x.clone());
        }
        Ok(Trajectory {
            states,
            observations,
            seed,
        })
    }

    /// Unnormalized `R(u, x) = Q(u, x) G(x, y)`.
    pub fn optimal_kernel(&self, y: &[f64]) -> DensityKernel {
        let q = self.transition.density.clone();
        let g = self.observation.density.clone();
        let y = y.to_vec();
        let d = self.state_dim();
        DensityKernel::new("optimal", d, d, Arc::new(move |u, x| q(u, x) * g(x, &y)))
    }
}

/// `σ ξ(x) ≤ R(u, x) ≤ ξ(x) / σ` on the estimation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingEstimate {
    pub sigma: f64,
    /// `ξ` at the points of `grid_x`.
    pub xi: Vec<f64>,
    /// Largest violation of the sandwich on the grid, relative to `ξ`.
    pub slack: f64,
}

/// `ξ(x) = √(min_u R · max_u R)` and `σ = min_x √(min_u R / max_u R)`.
///
/// Negative or non-finite values are an error; a zero on the grid gives `σ = 0`.
pub fn estimate_mixing(r: &DensityKernel, grid_u: &[Vec<f64>], grid_x: &[Vec<f64>]) -> Result<MixingEstimate> {
    if grid_u.is_empty() || grid_x.is_empty() {
        return Err(Error::InvalidParameter("mixing grids must be nonempty".into()));
    }
    let mut sigma = f64::INFINITY;
    let mut xi = Vec::with_capacity(grid_x.len());
    let mut columns = Vec::with_capacity(grid_x.len());
    for x in grid_x {
        let col: Vec<f64> = grid_u.iter().map(|u| r.density(u, x)).collect();
        if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("kernel is negative or non-finite on the mixing grid".into()));
        }
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(0.0, f64::max);
        let (s, x_val) = if hi == 0.0 { (0.0, 0.0) } else { ((lo / hi).sqrt(), (lo * hi).sqrt()) };
        sigma = sigma.min(s);
        xi.push(x_val);
        columns.push(col);
    }
    let mut slack: f64 = 0.0;
    if sigma > 0.0 {
        for (col, &x) in columns.iter().zip(&xi) {
            for &v in col {
                slack = slack.max((sigma * x - v) / x).max((v - x / sigma) / x);
            }
        }
    }
    Ok(MixingEstimate { sigma, xi, slack })
}

/// Smallest `σ` of the optimal kernels over a sequence of observations.
pub fn estimate_mixing_over(hmm: &Hmm, observations: &[Vec<f64>], grid_u: &[Vec<f64>], grid_x: &[Vec<f64>]) -> Result<f64> {
    let mut sigma = 1.0_f64;
    for y in observations {
        sigma = sigma.min(estimate_mixing(&hmm.optimal_kernel(y), grid_u, grid_x)?.sigma);
    }
    Ok(sigma)
}
