use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::rng::{self, stream};

use super::trace::{FilterTrace, Method, Posterior};

/// Weighted particles, before resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub particles: Vec<Vec<f64>>,
    /// Normalized weights.
    pub weights: Vec<f64>,
    /// Index of each particle's ancestor among the initial draws.
    pub ancestors: Vec<usize>,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.particles.first().map_or(0, |p| p.len());
        let mut m = vec![0.0; d];
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            for k in 0..d {
                m[k] += w * p[k];
            }
        }
        m
    }

    /// Standard error of `mean()` per coordinate from the ancestral lineages: the weighted
    /// centred values are summed within each group of particles sharing an initial ancestor.
    pub fn mean_std_error(&self) -> Vec<f64> {
        let mean = self.mean();
        let d = mean.len();
        let n = self.len();
        let mut groups = vec![vec![0.0; d]; n];
        for ((p, &w), &a) in self.particles.iter().zip(&self.weights).zip(&self.ancestors) {
            for k in 0..d {
                groups[a][k] += w * (p[k] - mean[k]);
            }
        }
        (0..d)
            .map(|k| groups.iter().map(|g| g[k] * g[k]).sum::<f64>().sqrt())
            .collect()
    }

    /// `1 / Σ w²`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Bootstrap filter: propagate through `Q`, weight by `G`, resample multinomially every step.
/// Entry `k` of the trace holds the weighted cloud before the resampling of step `k`.
pub fn particle_filter_run(hmm: &Hmm, n: usize, observations: &[Vec<f64>], seed: u64) -> Result<FilterTrace> {
    if n == 0 {
        return Err(Error::InvalidParameter("particle count must be positive".into()));
    }
    let mut rng = rng::substream(seed, stream::PARTICLES);
    let mut particles = (0..n)
        .map(|_| hmm.initial.sample(&[], &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut ancestors: Vec<usize> = (0..n).collect();
    let uniform = vec![1.0 / n as f64; n];
    let mut trace = FilterTrace::new(
        Method::Particle,
        Posterior::Particles(ParticleCloud {
            particles: particles.clone(),
            weights: uniform,
            ancestors: ancestors.clone(),
        }),
    );
    for (k, y) in observations.iter().enumerate() {
        let step = k + 1;
        let start = Instant::now();
        for p in particles.iter_mut() {
            *p = hmm.transition.sample(p, &mut rng).map_err(|e| e.at_step(step))?;
        }
        let raw: Vec<f64> = particles.iter().map(|p| hmm.observation.density(p, y)).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::WeightCollapse { step });
        }
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let cloud = ParticleCloud {
            particles: particles.clone(),
            weights,
            ancestors: ancestors.clone(),
        };
        let index = WeightedIndex::new(&cloud.weights).map_err(|_| Error::WeightCollapse { step })?;
        let picks: Vec<usize> = (0..n).map(|_| index.sample(&mut rng)).collect();
        particles = picks.iter().map(|&i| cloud.particles[i].clone()).collect();
        ancestors = picks.iter().map(|&i| cloud.ancestors[i]).collect();
        let wall = start.elapsed().as_nanos() as u64;
        trace.push(Posterior::Particles(cloud), (total / n as f64).ln(), wall);
    }
    Ok(trace)
}
