mod common;

use std::sync::Arc;

use common::*;
use psdfilter_core::hmm::{estimate_mixing, DensityKernel};
use psdfilter_core::rng::substream;
use psdfilter_core::scenarios::{scenario, SCENARIO_IDS};
use psdfilter_core::{Domain, GridDensity, Hmm, TensorGrid};
use rand::Rng;

fn points_1d(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![-1.0 + 2.0 * (i as f64 + 0.5) / n as f64]).collect()
}

#[test]
fn simulation_is_deterministic() {
    for id in SCENARIO_IDS {
        let s = scenario(id).unwrap();
        let a = s.hmm.simulate(30, 5).unwrap();
        assert_eq!(a, s.hmm.simulate(30, 5).unwrap());
        assert_ne!(a, s.hmm.simulate(30, 6).unwrap());
        assert_eq!(a.states.len(), 31);
        assert_eq!(a.observations.len(), 30);
        if let Domain::Hypercube(_) = s.hmm.domain {
            assert!(a.states.iter().all(|x| s.hmm.domain.contains(x)));
        }
    }
}

#[test]
fn near_delta_transition_keeps_the_state() {
    let base = scenario("ar1").unwrap().hmm;
    let eps = 1e-9;
    let delta = DensityKernel::new("delta", 1, 1, Arc::new(|_, _| 1.0)).with_sampler(Arc::new(move |u, rng| {
        let z: f64 = rng.random_range(-1.0..1.0);
        Ok(vec![u[0] + eps * z])
    }));
    let hmm = Hmm::new(delta, base.observation.clone(), base.initial.clone(), base.domain.clone()).unwrap();
    let t = hmm.simulate(100, 1).unwrap();
    let x0 = t.states[0][0];
    assert!(t.states.iter().all(|x| (x[0] - x0).abs() <= 100.0 * eps));
}

#[test]
fn linear_gaussian_stationary_variance() {
    let s = scenario("linear_gaussian").unwrap();
    let lg = s.linear.unwrap();
    let (f, q) = (lg.f[(0, 0)], lg.q[(0, 0)]);
    let stationary = q / (1.0 - f * f);
    let t = s.hmm.simulate(100_000, 2).unwrap();
    let xs: Vec<f64> = t.states[1000..].iter().map(|x| x[0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    assert!(rel_err(var, stationary) <= 0.05, "{var} vs {stationary}");
}

#[test]
fn optimal_kernel_factorizes() {
    let s = scenario("bimodal").unwrap();
    let y = [0.25];
    let r = s.hmm.optimal_kernel(&y);
    let mut rng = rng(31);
    for _ in 0..100 {
        let (u, x) = ([rng.random_range(-1.0..1.0)], [rng.random_range(-1.0..1.0)]);
        let want = s.hmm.transition.density(&u, &x) * s.hmm.observation.density(&x, &y);
        assert_eq!(r.density(&u, &x), want);
    }
    let flat = DensityKernel::new("flat", 1, 1, Arc::new(|_, _| 1.0));
    let hmm = Hmm::new(s.hmm.transition.clone(), flat, s.hmm.initial.clone(), s.hmm.domain.clone()).unwrap();
    let r = hmm.optimal_kernel(&y);
    for _ in 0..100 {
        let (u, x) = ([rng.random_range(-1.0..1.0)], [rng.random_range(-1.0..1.0)]);
        assert_eq!(r.density(&u, &x), s.hmm.transition.density(&u, &x));
    }
}

#[test]
fn optimal_kernel_integrates_to_the_predictive_density() {
    let s = scenario("linear_gaussian").unwrap();
    let lg = s.linear.clone().unwrap();
    let (f, q, rv) = (lg.f[(0, 0)], lg.q[(0, 0)], lg.r[(0, 0)]);
    for (u, y) in [(0.3, -0.2), (-1.1, 0.5), (0.0, 0.0)] {
        let r = s.hmm.optimal_kernel(&[y]);
        let quad = integrate(|x| r.density(&[u], &[x]), -8.0, 8.0, 1e-15);
        let var = q + rv;
        let want = (-(y - f * u).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        assert!(rel_err(quad, want) <= 1e-8, "{quad} vs {want}");
    }
}

#[test]
fn mixing_estimate_is_stable_under_refinement() {
    let s = scenario("mixing").unwrap();
    let r = s.hmm.optimal_kernel(&[0.2]);
    let coarse = estimate_mixing(&r, &points_1d(100), &points_1d(100)).unwrap();
    let fine = estimate_mixing(&r, &points_1d(200), &points_1d(200)).unwrap();
    assert!(coarse.sigma > 0.0);
    assert!(rel_err(coarse.sigma, fine.sigma) <= 0.02, "{} vs {}", coarse.sigma, fine.sigma);
    assert!(coarse.slack <= 1e-9);
    assert!(fine.slack <= 1e-9);
}

/// Probability of each cell of `grid` under `density`, by a sub-cell midpoint rule.
fn cell_masses(grid: &TensorGrid, density: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let sub: usize = 16;
    let d = grid.dim();
    let steps: Vec<f64> = (0..d).map(|k| grid.step(k)).collect();
    (0..grid.len())
        .map(|i| {
            let c = grid.point(i);
            let mut acc = 0.0;
            for s in 0..sub.pow(d as u32) {
                let mut x = c.clone();
                let mut rest = s;
                for k in (0..d).rev() {
                    let j = rest % sub;
                    rest /= sub;
                    x[k] += steps[k] * ((j as f64 + 0.5) / sub as f64 - 0.5);
                }
                acc += density(&x);
            }
            acc * grid.cell_volume() / sub.pow(d as u32) as f64
        })
        .collect()
}

#[test]
fn sampler_histograms_match_densities() {
    let n = 100_000;
    for id in SCENARIO_IDS {
        let s = scenario(id).unwrap();
        let d = s.hmm.state_dim();
        let domain = match &s.hmm.domain {
            Domain::Whole => Domain::hypercube(vec![(-3.0, 3.0); d]).unwrap(),
            other => other.clone(),
        };
        let grid = TensorGrid::new(&domain, if d == 1 { 20 } else { 10 }).unwrap();
        let u = vec![0.3; d];
        let kernels: [(&DensityKernel, &[f64]); 3] =
            [(&s.hmm.transition, &u), (&s.hmm.observation, &u), (&s.hmm.initial, &[])];
        for (k, input) in kernels {
            let mut rng = substream(41, 0);
            let samples: Vec<Vec<f64>> = (0..n).map(|_| k.sample(input, &mut rng).unwrap()).collect();
            let hist = GridDensity::histogram(grid.clone(), &samples, &vec![1.0; n]).unwrap();
            let masses = cell_masses(&grid, |x| k.density(input, x));
            let vol = grid.cell_volume();
            let tv: f64 = hist.values().iter().zip(&masses).map(|(h, m)| (h * vol - m).abs()).sum();
            // mass outside the box of the untruncated model is counted as error
            let outside = 1.0 - masses.iter().sum::<f64>();
            assert!(tv + outside <= 0.05, "{id}/{}: {tv} + {outside}", k.name());
        }
    }
}
