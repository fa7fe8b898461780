//! Bundled benchmark models.
//!
//! | id                | state                         | transition                         | observation        |
//! |-------------------|-------------------------------|------------------------------------|--------------------|
//! | `ar1`             | `(-1, 1)`                     | `0.8 u + N(0, 0.3²)`, truncated    | `x + N(0, 0.3²)`, truncated |
//! | `mixing`          | `(-1, 1)`                     | `0.5 u + N(0, 0.6²)`, truncated    | `x + N(0, 0.5²)`, truncated |
//! | `bimodal`         | `(-1, 1)`                     | `0.7 tanh(2u) ± 0.3 + N(0, 0.15²)`, truncated | `x + N(0, 0.3²)`, truncated |
//! | `rotation2d`      | `(-1, 1)²`                    | `0.9 Rot(π/6) u + N(0, 0.2² I)`, truncated | `x + N(0, 0.3² I)`, truncated |
//! | `linear_gaussian` | `ℝ`                           | `0.9 u + N(0, 0.3²)`               | `x + N(0, 0.3²)`   |
//!
//! Initial laws are `N(0, 0.5²)` per coordinate, truncated to the state box where there is one.
//! Truncated kernels are renormalized in closed form through the error function.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::generalized::ConditionalGaussianLinear;
use crate::hmm::{DensityKernel, Hmm};
use crate::linalg::erf_diff;

/// Proposals allowed per truncated draw.
pub const REJECTION_CAP: usize = 10_000;

pub const SCENARIO_IDS: &[&str] = &["ar1", "mixing", "bimodal", "rotation2d", "linear_gaussian"];

/// Linear-Gaussian state-space model `x' = F u + b + N(0, Q)`, `y = H x + c + N(0, R)`, `x_0 ~ N(m_0, P_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub f: DMatrix<f64>,
    pub b: DVector<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub r: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl LinearGaussian {
    pub fn transition(&self) -> Result<ConditionalGaussianLinear> {
        ConditionalGaussianLinear::new(self.f.clone(), self.b.clone(), self.q.clone())
    }

    pub fn observation(&self) -> Result<ConditionalGaussianLinear> {
        ConditionalGaussianLinear::new(self.h.clone(), self.c.clone(), self.r.clone())
    }

    /// The model on all of space with exact Gaussian samplers.
    pub fn hmm(&self) -> Result<Hmm> {
        let d = self.f.nrows();
        let q = Arc::new(self.transition()?);
        let g = Arc::new(self.observation()?);
        let init = Arc::new(ConditionalGaussianLinear::new(
            DMatrix::zeros(d, 0),
            self.m0.clone(),
            self.p0.clone(),
        )?);
        Ok(Hmm::new(
            gaussian_kernel("transition", q),
            gaussian_kernel("observation", g),
            gaussian_kernel("initial", init),
            Domain::Whole,
        )?)
    }
}

fn gaussian_kernel(name: &'static str, p: Arc<ConditionalGaussianLinear>) -> DensityKernel {
    let (d_in, d_out) = p.dims();
    let chol = nalgebra::Cholesky::new(p.covariance.clone()).map(|c| c.l());
    let pd = p.clone();
    let kernel = DensityKernel::new(name, d_in, d_out, Arc::new(move |u, x| pd.density(u, x)));
    match chol {
        Some(l) => kernel.with_sampler(Arc::new(move |u, rng| {
            let z = DVector::from_iterator(d_out, (0..d_out).map(|_| normal(rng)));
            let mean = &p.transition * DVector::from_column_slice(u) + &p.offset;
            Ok((mean + &l * z).iter().copied().collect())
        })),
        None => kernel,
    }
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
}

/// Mass of `N(m, s²)` on `(lo, hi)`.
fn normal_mass(m: f64, s: f64, lo: f64, hi: f64) -> f64 {
    0.5 * erf_diff((lo - m) / (s * SQRT_2), (hi - m) / (s * SQRT_2))
}

/// Mixture `Σ_c w_c N(m_c, s² I)` restricted to a box and renormalized.
fn truncated_mixture_density(x: &[f64], means: &[Vec<f64>], weights: &[f64], s: f64, bounds: &[(f64, f64)]) -> f64 {
    if x.iter().zip(bounds).any(|(&v, &(lo, hi))| !(v > lo && v < hi)) {
        return 0.0;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, &w) in means.iter().zip(weights) {
        let mut p = w;
        let mut z = w;
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            p *= normal_pdf(x[k], m[k], s);
            z *= normal_mass(m[k], s, lo, hi);
        }
        num += p;
        den += z;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn truncated_mixture_sample(
    rng: &mut dyn RngCore,
    means: &[Vec<f64>],
    weights: &[f64],
    s: f64,
    bounds: &[(f64, f64)],
) -> Result<Vec<f64>> {
    for _ in 0..REJECTION_CAP {
        let pick: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        let mut c = means.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if pick < acc {
                c = i;
                break;
            }
        }
        let x: Vec<f64> = means[c].iter().map(|&m| m + s * normal(rng)).collect();
        if x.iter().zip(bounds).all(|(&v, &(lo, hi))| v > lo && v < hi) {
            return Ok(x);
        }
    }
    Err(Error::RejectionCap(REJECTION_CAP))
}

/// Kernel `K(u, ·) = Σ_c w_c N(mean_c(u), s² I)` truncated to `bounds`.
fn truncated_kernel(
    name: &'static str,
    d_in: usize,
    bounds: Vec<(f64, f64)>,
    s: f64,
    weights: Vec<f64>,
    means: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
) -> DensityKernel {
    let d_out = bounds.len();
    let means = Arc::new(means);
    let (m1, b1, w1) = (means.clone(), bounds.clone(), weights.clone());
    DensityKernel::new(
        name,
        d_in,
        d_out,
        Arc::new(move |u, x| truncated_mixture_density(x, &m1(u), &w1, s, &b1)),
    )
    .with_sampler(Arc::new(move |u, rng| truncated_mixture_sample(rng, &means(u), &weights, s, &bounds)))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub hmm: Hmm,
    /// Exact model for `linear_gaussian`; the untruncated analogue for `ar1`, `mixing` and `rotation2d`.
    pub linear: Option<LinearGaussian>,
    /// Smoothness used by the learning schedule for this scenario's kernels.
    pub beta: f64,
}

/// Truncated AR(1) `x' = a u + N(0, q²)` on `(-1, 1)` with observation `x + N(0, r²)` truncated to `(-1, 1)`.
pub fn truncated_ar1(id: &str, a: f64, q: f64, r: f64) -> Result<Scenario> {
    let unit = vec![(-1.0, 1.0)];
    let transition = truncated_kernel("transition", 1, unit.clone(), q, vec![1.0], move |u| vec![vec![a * u[0]]]);
    let observation = truncated_kernel("observation", 1, unit.clone(), r, vec![1.0], |x| vec![x.to_vec()]);
    let initial = truncated_kernel("initial", 0, unit.clone(), 0.5, vec![1.0], |_| vec![vec![0.0]]);
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    Ok(Scenario {
        id: id.to_string(),
        hmm: Hmm::new(transition, observation, initial, Domain::Hypercube(unit))?,
        linear: Some(LinearGaussian {
            f: one(a),
            b: DVector::zeros(1),
            q: one(q * q),
            h: one(1.0),
            c: DVector::zeros(1),
            r: one(r * r),
            m0: DVector::zeros(1),
            p0: one(0.25),
        }),
        beta: 2.0,
    })
}

pub fn bimodal() -> Result<Scenario> {
    let unit = vec![(-1.0, 1.0)];
    let transition = truncated_kernel("transition", 1, unit.clone(), 0.15, vec![0.5, 0.5], |u| {
        let m = 0.7 * (2.0 * u[0]).tanh();
        vec![vec![m - 0.3], vec![m + 0.3]]
    });
    let observation = truncated_kernel("observation", 1, unit.clone(), 0.3, vec![1.0], |x| vec![x.to_vec()]);
    let initial = truncated_kernel("initial", 0, unit.clone(), 0.5, vec![1.0], |_| vec![vec![0.0]]);
    Ok(Scenario {
        id: "bimodal".into(),
        hmm: Hmm::new(transition, observation, initial, Domain::Hypercube(unit))?,
        linear: None,
        beta: 2.0,
    })
}

pub fn rotation2d() -> Result<Scenario> {
    let square = vec![(-1.0, 1.0); 2];
    let (rho, theta) = (0.9, PI / 6.0);
    let f = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]) * rho;
    let fm = f.clone();
    let transition = truncated_kernel("transition", 2, square.clone(), 0.2, vec![1.0], move |u| {
        vec![(&fm * DVector::from_column_slice(u)).iter().copied().collect()]
    });
    let observation = truncated_kernel("observation", 2, square.clone(), 0.3, vec![1.0], |x| vec![x.to_vec()]);
    let initial = truncated_kernel("initial", 0, square.clone(), 0.5, vec![1.0], |_| vec![vec![0.0, 0.0]]);
    Ok(Scenario {
        id: "rotation2d".into(),
        hmm: Hmm::new(transition, observation, initial, Domain::Hypercube(square))?,
        linear: Some(LinearGaussian {
            f,
            b: DVector::zeros(2),
            q: DMatrix::identity(2, 2) * 0.04,
            h: DMatrix::identity(2, 2),
            c: DVector::zeros(2),
            r: DMatrix::identity(2, 2) * 0.09,
            m0: DVector::zeros(2),
            p0: DMatrix::identity(2, 2) * 0.25,
        }),
        beta: 2.0,
    })
}

pub fn linear_gaussian() -> Result<Scenario> {
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let lg = LinearGaussian {
        f: one(0.9),
        b: DVector::zeros(1),
        q: one(0.09),
        h: one(1.0),
        c: DVector::zeros(1),
        r: one(0.09),
        m0: DVector::zeros(1),
        p0: one(0.25),
    };
    Ok(Scenario {
        id: "linear_gaussian".into(),
        hmm: lg.hmm()?,
        linear: Some(lg),
        beta: 2.0,
    })
}

/// Bundled scenario by id.
pub fn scenario(id: &str) -> Result<Scenario> {
    match id {
        "ar1" => truncated_ar1("ar1", 0.8, 0.3, 0.3),
        "mixing" => truncated_ar1("mixing", 0.5, 0.6, 0.5),
        "bimodal" => bimodal(),
        "rotation2d" => rotation2d(),
        "linear_gaussian" => linear_gaussian(),
        other => Err(Error::InvalidParameter(format!(
            "unknown scenario `{other}` (known: {})",
            SCENARIO_IDS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_transition_is_normalized() {
        let s = scenario("ar1").unwrap();
        let n = 20_000;
        let h = 2.0 / n as f64;
        for u in [-0.9, 0.0, 0.7] {
            let mass: f64 = (0..n)
                .map(|i| s.hmm.transition.density(&[u], &[-1.0 + (i as f64 + 0.5) * h]) * h)
                .sum();
            assert!((mass - 1.0).abs() < 1e-6, "u = {u}: mass {mass}");
        }
    }

    #[test]
    fn unknown_scenario_is_rejected() {
        assert!(scenario("nope").is_err());
    }
}
