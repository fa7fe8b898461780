//! Total variation, Hilbert projective metric, Birkhoff contraction bound and sup-norm error.

use rand::Rng;
use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::grid::TensorGrid;
use crate::rng::{self, stream};

/// Smallest Monte Carlo sample count.
pub const MIN_MC_SAMPLES: usize = 1000;

/// Numerical integration scheme over a bounded domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Quadrature {
    /// Midpoint rule, `d ≤ 2`.
    TensorGrid { domain: Domain, cells_per_dim: usize },
    /// Importance sampling from `(p + q) / 2`, drawn by rejection from the uniform law on the box.
    MonteCarlo { domain: Domain, samples: usize, seed: u64 },
}

impl Quadrature {
    pub fn grid(domain: &Domain, cells_per_dim: usize) -> Self {
        Quadrature::TensorGrid {
            domain: domain.clone(),
            cells_per_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Quadrature::TensorGrid { domain, cells_per_dim } => {
                let d = domain.box_bounds()?.len();
                if d > 2 {
                    return Err(Error::InvalidParameter(format!("tensor grids are limited to d <= 2, got {d}")));
                }
                if *cells_per_dim == 0 {
                    return Err(Error::InvalidParameter("grid needs at least one cell".into()));
                }
            }
            Quadrature::MonteCarlo { domain, samples, .. } => {
                domain.box_bounds()?;
                if *samples < MIN_MC_SAMPLES {
                    return Err(Error::InvalidParameter(format!(
                        "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Value with a standard error (zero for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `∫ |p - q|` over the quadrature domain.
pub fn tv_distance<P, Q>(p: &P, q: &Q, quad: &Quadrature) -> Result<f64>
where
    P: Fn(&[f64]) -> f64 + Sync + ?Sized,
    Q: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    tv_estimate(p, q, quad).map(|e| e.value)
}

pub fn tv_estimate<P, Q>(p: &P, q: &Q, quad: &Quadrature) -> Result<Estimate>
where
    P: Fn(&[f64]) -> f64 + Sync + ?Sized,
    Q: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    quad.validate()?;
    match quad {
        Quadrature::TensorGrid { domain, cells_per_dim } => {
            let grid = TensorGrid::new(domain, *cells_per_dim)?;
            let diffs: Vec<f64> = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let x = grid.point(i);
                    (p(&x) - q(&x)).abs()
                })
                .collect();
            Ok(Estimate {
                value: diffs.iter().sum::<f64>() * grid.cell_volume(),
                std_error: 0.0,
            })
        }
        Quadrature::MonteCarlo { domain, samples, seed } => tv_monte_carlo(p, q, domain, *samples, *seed),
    }
}

fn tv_monte_carlo<P, Q>(p: &P, q: &Q, domain: &Domain, samples: usize, seed: u64) -> Result<Estimate>
where
    P: Fn(&[f64]) -> f64 + Sync + ?Sized,
    Q: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let volume = domain.volume();
    let mut rng = rng::substream(seed, stream::MONTE_CARLO);
    let avg = |x: &[f64]| 0.5 * (p(x) + q(x));
    // envelope: twice the largest average density seen on a uniform pilot sample
    let pilot = rng::uniform_points(&mut rng, domain, samples)?;
    let envelope = 2.0 * pilot.iter().map(|x| avg(x)).fold(0.0, f64::max);
    if envelope == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            std_error: 0.0,
        });
    }
    let mut ratios = Vec::with_capacity(samples);
    let mut proposals = 0usize;
    let cap = samples.saturating_mul(10_000);
    while ratios.len() < samples {
        if proposals >= cap {
            return Err(Error::RejectionCap(cap));
        }
        proposals += 1;
        let x = rng::uniform_points(&mut rng, domain, 1)?.pop().expect("one point");
        let m = avg(&x);
        if rng.random::<f64>() * envelope < m {
            ratios.push((p(&x) - q(&x)).abs() / m);
        }
    }
    // ∫ m = acceptance rate · volume · envelope
    let mass = ratios.len() as f64 / proposals as f64 * volume * envelope;
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(Estimate {
        value: mass * mean,
        std_error: mass * (var / n).sqrt(),
    })
}

/// `log(max p/q · max q/p)` over the grid; infinite unless both are positive everywhere on it.
pub fn hilbert_metric<P, Q>(p: &P, q: &Q, grid: &[Vec<f64>]) -> f64
where
    P: Fn(&[f64]) -> f64 + ?Sized,
    Q: Fn(&[f64]) -> f64 + ?Sized,
{
    let pv: Vec<f64> = grid.iter().map(|x| p(x)).collect();
    let qv: Vec<f64> = grid.iter().map(|x| q(x)).collect();
    hilbert_metric_values(&pv, &qv)
}

/// Hilbert metric between two positive vectors of grid values.
pub fn hilbert_metric_values(p: &[f64], q: &[f64]) -> f64 {
    let mut up = f64::NEG_INFINITY;
    let mut down = f64::NEG_INFINITY;
    for (&a, &b) in p.iter().zip(q) {
        if !(a > 0.0) || !(b > 0.0) {
            return f64::INFINITY;
        }
        let l = a.ln() - b.ln();
        up = up.max(l);
        down = down.max(-l);
    }
    if p.is_empty() {
        0.0
    } else {
        (up + down).max(0.0)
    }
}

/// `(1 - σ²) / (1 + σ²)` for `σ ∈ (0, 1]`.
pub fn birkhoff_bound(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidParameter(format!("sigma must be in (0, 1], got {sigma}")));
    }
    let s2 = sigma * sigma;
    Ok((1.0 - s2) / (1.0 + s2))
}

/// `max |f - g|` over the grid.
pub fn sup_error<F, G>(f: &F, g: &G, grid: &[Vec<f64>]) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
    G: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    grid.par_iter()
        .map(|x| (f(x) - g(x)).abs())
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hilbert_examples() {
        let p = [1.0, 2.0, 3.0];
        assert_eq!(hilbert_metric_values(&p, &p), 0.0);
        let scaled: Vec<f64> = p.iter().map(|v| 5.0 * v).collect();
        assert!(hilbert_metric_values(&p, &scaled).abs() < 1e-14);
        let ratio = [0.5, 1.0, 2.0];
        assert!((hilbert_metric_values(&ratio, &[1.0; 3]) - 4.0_f64.ln()).abs() < 1e-14);
        assert_eq!(hilbert_metric_values(&[0.0, 1.0], &[1.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn birkhoff_examples() {
        assert_eq!(birkhoff_bound(1.0).unwrap(), 0.0);
        assert!((birkhoff_bound(1.0 / 3.0_f64.sqrt()).unwrap() - 0.5).abs() < 1e-15);
        assert!(birkhoff_bound(0.0).is_err());
        assert!(birkhoff_bound(1.5).is_err());
    }

    #[test]
    fn tv_of_disjoint_uniforms_is_two() {
        let d = Domain::unit_cube(1);
        let p = |x: &[f64]| if x[0] < 0.0 { 1.0 } else { 0.0 };
        let q = |x: &[f64]| if x[0] >= 0.0 { 1.0 } else { 0.0 };
        let tv = tv_distance(&p, &q, &Quadrature::grid(&d, 1000)).unwrap();
        assert!((tv - 2.0).abs() < 1e-12);
        let mc = tv_estimate(&p, &q, &Quadrature::MonteCarlo { domain: d, samples: 2000, seed: 3 }).unwrap();
        assert!((mc.value - 2.0).abs() < 5.0 * mc.std_error.max(0.05));
    }

    #[test]
    fn sup_error_of_shift() {
        let grid: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let f = |x: &[f64]| x[0].sin();
        let g = |x: &[f64]| x[0].sin() + 0.3;
        assert!((sup_error(&f, &g, &grid) - 0.3).abs() < 1e-15);
    }
}
