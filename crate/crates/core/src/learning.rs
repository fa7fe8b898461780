//! Learning Gaussian PSD models from function evaluations.
//!
//! `learn_rank_one` fits `√f` by kernel ridge regression on uniformly drawn anchors and squares
//! the result. `learn_generalized` fits full-precision components by L-BFGS on the squared loss.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::domain::{Domain, VariableGroups};
use crate::error::{Error, Result};
use crate::generalized::GeneralizedPsdModel;
use crate::psd::GaussianPsdModel;
use crate::rng::{self, stream};

/// Inputs of the rank-one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    /// Training-set size.
    pub n: usize,
    /// Number of anchors.
    pub m: usize,
    pub precision: DVector<f64>,
    pub regularization: f64,
    pub domain: Domain,
    pub seed: u64,
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n < self.m {
            return Err(Error::InvalidParameter(format!(
                "need n >= m >= 1, got n = {}, m = {}",
                self.n, self.m
            )));
        }
        if !(self.regularization > 0.0) {
            return Err(Error::InvalidParameter("regularization must be positive".into()));
        }
        if self.precision.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("precision must be positive".into()));
        }
        self.domain.check_dim(self.precision.len())?;
        self.domain.box_bounds()?;
        Ok(())
    }
}

/// Accuracy target and smoothness that determine the hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSchedule {
    pub epsilon: f64,
    pub beta: f64,
    pub dim: usize,
    pub c_m: f64,
    pub c_n: f64,
}

impl EpsilonSchedule {
    pub fn new(epsilon: f64, beta: f64, dim: usize) -> Self {
        EpsilonSchedule {
            epsilon,
            beta,
            dim,
            c_m: 1.0,
            c_n: 1.0,
        }
    }
}

/// `η = ε^{-2/β}`, `λ = ε^{(2β+d)/β}`, `M = ⌈c_M log(1/ε)^{d+1} ε^{-d/β}⌉`, `n = ⌈c_n ε^{-2d/β}⌉`,
/// with `M ≥ 1` and `n ≥ M`.
pub fn hyperparams_from_epsilon(s: &EpsilonSchedule, domain: &Domain, seed: u64) -> Result<LearnConfig> {
    let d = s.dim as f64;
    if !(s.beta > d / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothness {} must exceed half the dimension {}",
            s.beta,
            d / 2.0
        )));
    }
    if !(s.epsilon > 0.0 && s.epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be in (0, 1], got {}", s.epsilon)));
    }
    if !(s.c_m > 0.0 && s.c_n > 0.0) {
        return Err(Error::InvalidParameter("schedule constants must be positive".into()));
    }
    let eps = s.epsilon;
    let log_inv = (1.0 / eps).ln();
    let eta = eps.powf(-2.0 / s.beta);
    let lambda = eps.powf((2.0 * s.beta + d) / s.beta);
    let m = (s.c_m * log_inv.powf(d + 1.0) * eps.powf(-d / s.beta)).ceil().max(1.0) as usize;
    let n = ((s.c_n * eps.powf(-2.0 * d / s.beta)).ceil() as usize).max(m);
    Ok(LearnConfig {
        n,
        m,
        precision: DVector::from_element(s.dim, eta),
        regularization: lambda,
        domain: domain.clone(),
        seed,
    })
}

fn kernel(x: &[f64], z: &[f64], eta: &DVector<f64>) -> f64 {
    let mut q = 0.0;
    for k in 0..x.len() {
        let diff = x[k] - z[k];
        q += eta[k] * diff * diff;
    }
    (-q).exp()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Kernel ridge regression restricted to the span of the anchors:
/// `(K_nmᵀ K_nm / n + λ K_mm + τ I) a = K_nmᵀ y / n`, with `τ` escalated from
/// `1e-12 tr(K_mm)/M` by factors of ten up to `1e-6 tr(K_mm)/M`.
pub fn solve_krr(
    anchors: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    precision: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    let (m, d) = anchors.shape();
    let n = x.nrows();
    if x.ncols() != d || precision.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.ncols(),
        });
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("regularization must be positive".into()));
    }
    let a_rows = rows(anchors);
    let x_rows = rows(x);
    let knm_rows: Vec<Vec<f64>> = x_rows
        .par_iter()
        .map(|xr| a_rows.iter().map(|ar| kernel(xr, ar, precision)).collect())
        .collect();
    let knm = DMatrix::from_fn(n, m, |r, c| knm_rows[r][c]);
    let kmm = DMatrix::from_fn(m, m, |i, j| kernel(&a_rows[i], &a_rows[j], precision));
    let nf = n as f64;
    let mut system = knm.transpose() * &knm / nf + &kmm * lambda;
    let rhs = knm.transpose() * y / nf;
    crate::linalg::symmetrize(&mut system);
    let base = kmm.trace() / m as f64;
    let mut tau = 1e-12 * base;
    while tau <= 1e-6 * base * (1.0 + 1e-9) {
        let mut s = system.clone();
        for i in 0..m {
            s[(i, i)] += tau;
        }
        if let Some(ch) = nalgebra::Cholesky::new(s) {
            let a = ch.solve(&rhs);
            if a.iter().all(|v| v.is_finite()) {
                return Ok(a);
            }
        }
        tau *= 10.0;
    }
    Err(Error::SolverFailure(format!(
        "normal equations of order {m} stayed singular with jitter up to {:e}",
        1e-6 * base
    )))
}

/// Square root of a target value; rounding-level negatives become zero.
fn sqrt_target(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v.sqrt())
    } else if v >= -1e-12 {
        Ok(0.0)
    } else {
        Err(Error::InvalidParameter(format!("target function is negative ({v})")))
    }
}

/// Rank-one model `(aᵀ Φ(x))²` fitted to `√f` on uniform training points and anchors.
pub fn learn_rank_one<F>(f: &F, cfg: &LearnConfig) -> Result<GaussianPsdModel>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    cfg.validate()?;
    let d = cfg.precision.len();
    let anc = rng::uniform_points(&mut rng::substream(cfg.seed, stream::ANCHORS), &cfg.domain, cfg.m)?;
    let anchors = DMatrix::from_fn(cfg.m, d, |r, c| anc[r][c]);
    learn_rank_one_at(f, &anchors, cfg)
}

/// As `learn_rank_one`, with the anchors given instead of drawn; `cfg.m` is ignored.
pub fn learn_rank_one_at<F>(f: &F, anchors: &DMatrix<f64>, cfg: &LearnConfig) -> Result<GaussianPsdModel>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    LearnConfig {
        m: anchors.nrows(),
        ..cfg.clone()
    }
    .validate()?;
    let d = cfg.precision.len();
    if anchors.ncols() != d || anchors.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: anchors.ncols(),
        });
    }
    let pts = rng::uniform_points(&mut rng::substream(cfg.seed, stream::TRAINING), &cfg.domain, cfg.n)?;
    let values: Vec<f64> = pts.par_iter().map(|p| f(p)).collect();
    let y = DVector::from_iterator(cfg.n, values.into_iter().map(sqrt_target).collect::<Result<Vec<_>>>()?);
    let x = DMatrix::from_fn(cfg.n, d, |r, c| pts[r][c]);
    let a = solve_krr(anchors, &x, &y, &cfg.precision, cfg.regularization)?;
    GaussianPsdModel::from_linear_square(&a, anchors, &cfg.precision)
}

/// For every `u` of `grid_u`, the point `(u, v*)` with `v*` the first maximizer of `f(u, ·)` on `grid_v`.
pub fn init_anchors_conditional<F>(f: &F, grid_u: &[Vec<f64>], grid_v: &[Vec<f64>]) -> Vec<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> f64 + ?Sized,
{
    grid_u
        .iter()
        .filter_map(|u| {
            let mut best: Option<(usize, f64)> = None;
            for (i, v) in grid_v.iter().enumerate() {
                let val = f(u, v);
                if best.is_none_or(|(_, b)| val > b) {
                    best = Some((i, val));
                }
            }
            best.map(|(i, _)| u.iter().chain(grid_v[i].iter()).copied().collect())
        })
        .collect()
}

/// Parameters of `ĝ(x) = Σ_j α_j exp(-‖R_j (x - μ_j)‖²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedParams {
    pub alpha: Vec<f64>,
    pub centers: Vec<DVector<f64>>,
    pub factors: Vec<DMatrix<f64>>,
}

impl GeneralizedParams {
    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    fn dim(&self) -> usize {
        self.centers.first().map_or(0, |c| c.len())
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for j in 0..self.order() {
            v.push(self.alpha[j]);
            v.extend(self.centers[j].iter());
            v.extend(self.factors[j].transpose().iter());
        }
        v
    }

    fn from_vec(v: &[f64], m: usize, d: usize) -> Self {
        let stride = 1 + d + d * d;
        let mut out = GeneralizedParams {
            alpha: Vec::with_capacity(m),
            centers: Vec::with_capacity(m),
            factors: Vec::with_capacity(m),
        };
        for j in 0..m {
            let b = &v[j * stride..(j + 1) * stride];
            out.alpha.push(b[0]);
            out.centers.push(DVector::from_column_slice(&b[1..1 + d]));
            out.factors.push(DMatrix::from_row_slice(d, d, &b[1 + d..]));
        }
        out
    }

    /// `ĝ(x)`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        (0..self.order())
            .map(|j| {
                let z = &self.factors[j] * (&xv - &self.centers[j]);
                self.alpha[j] * (-z.norm_squared()).exp()
            })
            .sum()
    }

    /// Induced rank-one generalized model of `ĝ²` with precisions `P_j = R_jᵀ R_j`.
    pub fn to_model(&self, groups: VariableGroups) -> Result<GeneralizedPsdModel> {
        let alpha = DVector::from_column_slice(&self.alpha);
        let precisions: Vec<DMatrix<f64>> = self.factors.iter().map(|r| r.transpose() * r).collect();
        GeneralizedPsdModel::from_linear_square(&alpha, &precisions, &self.centers, groups)
    }
}

/// How `learn_generalized` starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Start from the given parameters.
    Explicit(GeneralizedParams),
    /// Given centers, isotropic factors `√precision · I`, amplitudes `√f(μ_j)`.
    Centers { centers: Vec<Vec<f64>>, precision: f64 },
    /// Centers drawn uniformly from the domain, otherwise as `Centers`.
    Uniform { precision: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedLearnConfig {
    pub order: usize,
    /// Training-set size.
    pub n: usize,
    pub domain: Domain,
    pub init: InitStrategy,
    /// Maximum number of quasi-Newton iterations.
    pub budget: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GeneralizedFit {
    pub params: GeneralizedParams,
    pub model: GeneralizedPsdModel,
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: u64,
}

struct SquaredLoss {
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
    m: usize,
    d: usize,
}

const CHUNK: usize = 64;

impl SquaredLoss {
    fn residuals(&self, p: &GeneralizedParams) -> Vec<(f64, f64)> {
        self.points
            .par_iter()
            .zip(&self.targets)
            .map(|(x, &f)| {
                let g = p.evaluate(x);
                (f - g * g, g)
            })
            .collect()
    }

    fn loss(&self, p: &GeneralizedParams) -> f64 {
        let n = self.points.len() as f64;
        self.residuals(p).iter().map(|(r, _)| r * r).sum::<f64>() / n
    }

    fn grad(&self, p: &GeneralizedParams) -> Vec<f64> {
        let (m, d) = (self.m, self.d);
        let stride = 1 + d + d * d;
        let n = self.points.len() as f64;
        let res = self.residuals(p);
        let idx: Vec<usize> = (0..self.points.len()).collect();
        // fixed-size chunks summed in order keep the result independent of the thread count
        let partials: Vec<Vec<f64>> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; m * stride];
                for &i in chunk {
                    let (r, ghat) = res[i];
                    let outer = -4.0 * r * ghat / n;
                    if outer == 0.0 {
                        continue;
                    }
                    let x = DVector::from_column_slice(&self.points[i]);
                    for j in 0..m {
                        let diff = &x - &p.centers[j];
                        let z = &p.factors[j] * &diff;
                        let k = (-z.norm_squared()).exp();
                        let base = j * stride;
                        g[base] += outer * k;
                        let ak = outer * p.alpha[j] * k;
                        // ∂/∂μ = 2 α k Rᵀ R (x - μ)
                        let dmu = p.factors[j].transpose() * &z * (2.0 * ak);
                        for t in 0..d {
                            g[base + 1 + t] += dmu[t];
                        }
                        // ∂/∂R = -2 α k R (x - μ)(x - μ)ᵀ
                        for a in 0..d {
                            for b in 0..d {
                                g[base + 1 + d + a * d + b] -= 2.0 * ak * z[a] * diff[b];
                            }
                        }
                    }
                }
                g
            })
            .collect();
        let mut g = vec![0.0; m * stride];
        for part in partials {
            for (acc, v) in g.iter_mut().zip(part) {
                *acc += v;
            }
        }
        g
    }
}

impl CostFunction for SquaredLoss {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, v: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.loss(&GeneralizedParams::from_vec(v, self.m, self.d)))
    }
}

impl Gradient for SquaredLoss {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, v: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.grad(&GeneralizedParams::from_vec(v, self.m, self.d)))
    }
}

/// Fits `ĝ` minimizing `(1/n) Σ_i (f(x_i) - ĝ(x_i)²)²` over amplitudes, centers and factors
/// and returns the induced rank-one generalized model of `ĝ²` (single group `"x"`).
pub fn learn_generalized<F>(f: &F, cfg: &GeneralizedLearnConfig) -> Result<GeneralizedFit>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let bounds = cfg.domain.box_bounds()?;
    let d = bounds.len();
    if cfg.n == 0 {
        return Err(Error::InvalidParameter("training set must be nonempty".into()));
    }
    let points = rng::uniform_points(&mut rng::substream(cfg.seed, stream::TRAINING), &cfg.domain, cfg.n)?;
    let targets: Vec<f64> = points.par_iter().map(|p| f(p)).collect();
    if targets.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return Err(Error::InvalidParameter("target function must be finite and nonnegative".into()));
    }
    let isotropic = |centers: Vec<Vec<f64>>, precision: f64| -> Result<GeneralizedParams> {
        if !(precision > 0.0) {
            return Err(Error::InvalidParameter("initial precision must be positive".into()));
        }
        let r = DMatrix::identity(d, d) * precision.sqrt();
        Ok(GeneralizedParams {
            alpha: centers.iter().map(|c| f(c).max(0.0).sqrt()).collect(),
            factors: vec![r; centers.len()],
            centers: centers.into_iter().map(DVector::from_vec).collect(),
        })
    };
    let init = match &cfg.init {
        InitStrategy::Explicit(p) => p.clone(),
        InitStrategy::Centers { centers, precision } => isotropic(centers.clone(), *precision)?,
        InitStrategy::Uniform { precision } => {
            let centers = rng::uniform_points(&mut rng::substream(cfg.seed, stream::INIT), &cfg.domain, cfg.order)?;
            isotropic(centers, *precision)?
        }
    };
    if init.order() != cfg.order || init.dim() != d || init.centers.iter().any(|c| c.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: cfg.order,
            got: init.order(),
        });
    }
    let problem = SquaredLoss {
        points,
        targets,
        m: cfg.order,
        d,
    };
    let initial_objective = problem.loss(&init);
    if !initial_objective.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let groups = VariableGroups::single("x", d);
    if cfg.budget == 0 || initial_objective == 0.0 {
        return Ok(GeneralizedFit {
            model: init.to_model(groups)?,
            params: init,
            initial_objective,
            objective: initial_objective,
            iterations: 0,
        });
    }
    let (m, start) = (cfg.order, init.to_vec());
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_cost(0.0)
        .map_err(|e| Error::SolverFailure(e.to_string()))?;
    let result = Executor::new(problem, solver)
        .configure(|s| s.param(start).max_iters(cfg.budget))
        .run();
    let (best, objective, iterations) = match result {
        Ok(res) => {
            let state = res.state();
            (state.get_best_param().cloned(), state.get_best_cost(), state.get_iter())
        }
        Err(e) => return Err(Error::SolverFailure(e.to_string())),
    };
    if !objective.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let params = match best {
        Some(v) if objective <= initial_objective => GeneralizedParams::from_vec(&v, m, d),
        _ => init,
    };
    let objective = objective.min(initial_objective);
    Ok(GeneralizedFit {
        model: params.to_model(groups)?,
        params,
        initial_objective,
        objective,
        iterations,
    })
}
