//! Gaussian PSD models `f(x) = e^s Φ(x)ᵀ A Φ(x)` with a shared diagonal precision and
//! their closed-form algebra (integral, partial evaluation, product, marginalization).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::domain::{Domain, VariableGroups};
use crate::error::{Error, Result};
use crate::linalg::{self, gauss_interval};

/// Tolerated negativity of an evaluation, relative to the absolute mass of the terms.
pub const EVAL_NEG_TOL: f64 = 1e-10;

/// `f(x) = e^{log_scale} Σ_ij A_ij k_η(x, x_i) k_η(x, x_j)` with `k_η(x, z) = exp(-Σ_k η_k (x_k - z_k)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPsdModel {
    anchors: DMatrix<f64>,
    precision: DVector<f64>,
    weights: DMatrix<f64>,
    groups: VariableGroups,
    log_scale: f64,
}

impl GaussianPsdModel {
    /// Builds a model after checking every invariant (positive precision, symmetric PSD weights,
    /// group dimensions summing to the anchor dimension).
    pub fn new(
        anchors: DMatrix<f64>,
        precision: DVector<f64>,
        weights: DMatrix<f64>,
        groups: VariableGroups,
    ) -> Result<Self> {
        let m = Self::from_parts(anchors, precision, weights, groups, 0.0)?;
        m.check_invariants()?;
        Ok(m)
    }

    /// Shape checks only; used by operations whose outputs are PSD by construction.
    pub(crate) fn from_parts(
        anchors: DMatrix<f64>,
        precision: DVector<f64>,
        weights: DMatrix<f64>,
        groups: VariableGroups,
        log_scale: f64,
    ) -> Result<Self> {
        let (m, d) = anchors.shape();
        if precision.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: precision.len(),
            });
        }
        if weights.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: weights.nrows(),
            });
        }
        if groups.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: groups.dim(),
            });
        }
        if precision.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(
                "precision must be strictly positive and finite".into(),
            ));
        }
        if !log_scale.is_finite() {
            return Err(Error::InvalidParameter("log_scale must be finite".into()));
        }
        Ok(GaussianPsdModel {
            anchors,
            precision,
            weights,
            groups,
            log_scale,
        })
    }

    /// Single-group model named `"x"`.
    pub fn with_single_group(
        anchors: DMatrix<f64>,
        precision: DVector<f64>,
        weights: DMatrix<f64>,
    ) -> Result<Self> {
        let d = anchors.ncols();
        Self::new(anchors, precision, weights, VariableGroups::single("x", d))
    }

    pub fn check_invariants(&self) -> Result<()> {
        if !linalg::is_symmetric(&self.weights, linalg::SYMMETRY_TOL) {
            return Err(Error::InvalidParameter("weight matrix is not symmetric".into()));
        }
        if !linalg::is_psd(&self.weights) {
            return Err(Error::InvalidParameter(format!(
                "weight matrix is not PSD (min eigenvalue {})",
                linalg::min_eigenvalue(&self.weights)
            )));
        }
        Ok(())
    }

    /// Model order `M` (number of anchors).
    pub fn order(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn precision(&self) -> &DVector<f64> {
        &self.precision
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn groups(&self) -> &VariableGroups {
        &self.groups
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn with_log_scale(mut self, log_scale: f64) -> Self {
        self.log_scale = log_scale;
        self
    }

    /// Weight matrix with the log-scale folded in.
    pub fn effective_weights(&self) -> DMatrix<f64> {
        &self.weights * self.log_scale.exp()
    }

    /// Same coordinates, new partition into groups.
    pub fn with_groups(mut self, groups: VariableGroups) -> Result<Self> {
        if groups.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: groups.dim(),
            });
        }
        self.groups = groups;
        Ok(self)
    }

    pub fn rename_group(mut self, from: &str, to: &str) -> Result<Self> {
        self.groups = self.groups.renamed(from, to)?;
        Ok(self)
    }

    /// `c · f` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {c}")));
        }
        let mut out = self.clone();
        out.log_scale += c.ln();
        Ok(out)
    }

    /// Feature map `Φ(x)_i = k_η(x, x_i)`.
    pub fn feature_map(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(DVector::from_iterator(
            self.order(),
            (0..self.order()).map(|i| {
                let mut q = 0.0;
                for (k, &xk) in x.iter().enumerate() {
                    let diff = xk - self.anchors[(i, k)];
                    q += self.precision[k] * diff * diff;
                }
                (-q).exp()
            }),
        ))
    }

    /// Pointwise value; tiny negative rounding is clamped to zero.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let phi = self.feature_map(x)?;
        let m = self.order();
        let mut value = 0.0;
        let mut magnitude = 0.0;
        for i in 0..m {
            if phi[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            let mut row_abs = 0.0;
            for j in 0..m {
                let t = self.weights[(i, j)] * phi[j];
                row += t;
                row_abs += t.abs();
            }
            value += phi[i] * row;
            magnitude += phi[i] * row_abs;
        }
        let scale = self.log_scale.exp();
        clamp_density(value * scale, magnitude * scale)
    }

    /// `W_ij = Π_{k ∈ coords} ∫ k_{η_k}(t, x_ik) k_{η_k}(t, x_jk) dt` over the given per-coordinate bounds.
    fn pair_integrals(&self, coords: &[usize], bounds: &[Option<(f64, f64)>]) -> DMatrix<f64> {
        let m = self.order();
        let mut w = DMatrix::from_element(m, m, 1.0);
        for (&k, &b) in coords.iter().zip(bounds) {
            let eta = self.precision[k];
            for i in 0..m {
                for j in i..m {
                    let (a, c) = (self.anchors[(i, k)], self.anchors[(j, k)]);
                    let diff = a - c;
                    let v = (-0.5 * eta * diff * diff).exp() * gauss_interval(2.0 * eta, 0.5 * (a + c), b);
                    w[(i, j)] *= v;
                    if i != j {
                        w[(j, i)] *= v;
                    }
                }
            }
        }
        w
    }

    /// Exact integral over all of space or over a hypercube.
    pub fn integral(&self, domain: &Domain) -> Result<f64> {
        domain.check_dim(self.dim())?;
        let coords: Vec<usize> = (0..self.dim()).collect();
        let bounds: Vec<_> = coords.iter().map(|&k| domain.bounds(k)).collect();
        let w = self.pair_integrals(&coords, &bounds);
        let mut total = 0.0;
        let mut magnitude = 0.0;
        for (a, b) in self.weights.iter().zip(w.iter()) {
            total += a * b;
            magnitude += (a * b).abs();
        }
        let scale = self.log_scale.exp();
        clamp_density(total * scale, magnitude * scale)
    }

    /// `h(x) = f(x, y0)` where `y0` fixes group `group`.
    pub fn partial_eval(&self, group: &str, value: &[f64]) -> Result<Self> {
        let range = self.groups.range(group)?;
        if value.len() != range.len() {
            return Err(Error::DimensionMismatch {
                expected: range.len(),
                got: value.len(),
            });
        }
        let m = self.order();
        let logs: Vec<f64> = (0..m)
            .map(|i| {
                -range
                    .clone()
                    .zip(value)
                    .map(|(k, &v)| {
                        let diff = v - self.anchors[(i, k)];
                        self.precision[k] * diff * diff
                    })
                    .sum::<f64>()
            })
            .collect();
        let lmax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lmax = if lmax.is_finite() { lmax } else { 0.0 };
        let d: Vec<f64> = logs.iter().map(|l| (l - lmax).exp()).collect();
        let weights = DMatrix::from_fn(m, m, |i, j| d[i] * self.weights[(i, j)] * d[j]);
        let keep: Vec<usize> = (0..self.dim()).filter(|k| !range.contains(k)).collect();
        let out = GaussianPsdModel::from_parts(
            self.anchors.select_columns(&keep),
            self.precision.select_rows(&keep),
            weights,
            self.groups.without(group)?,
            self.log_scale + 2.0 * lmax,
        )?;
        Ok(out.merge_duplicate_anchors())
    }

    /// Pointwise product. Shared groups have their precisions added per coordinate;
    /// the output has order `M1 · M2` with anchor `(i, k)` at index `i * M2 + k`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let groups = self.groups.union(&other.groups)?;
        let map_f = groups.coordinate_map(&self.groups);
        let map_g = groups.coordinate_map(&other.groups);
        let d = groups.dim();
        let (m1, m2) = (self.order(), other.order());
        let n = m1 * m2;

        let mut precision = DVector::zeros(d);
        for c in 0..d {
            precision[c] = map_f[c].map_or(0.0, |k| self.precision[k])
                + map_g[c].map_or(0.0, |k| other.precision[k]);
        }
        let mut anchors = DMatrix::zeros(n, d);
        let mut logs = vec![0.0; n];
        for i in 0..m1 {
            for k in 0..m2 {
                let row = i * m2 + k;
                let mut l = 0.0;
                for c in 0..d {
                    anchors[(row, c)] = match (map_f[c], map_g[c]) {
                        (Some(a), Some(b)) => {
                            let (ef, eg) = (self.precision[a], other.precision[b]);
                            let (xf, xg) = (self.anchors[(i, a)], other.anchors[(k, b)]);
                            let diff = xf - xg;
                            l -= ef * eg / (ef + eg) * diff * diff;
                            (ef * xf + eg * xg) / (ef + eg)
                        }
                        (Some(a), None) => self.anchors[(i, a)],
                        (None, Some(b)) => other.anchors[(k, b)],
                        (None, None) => unreachable!("coordinate belongs to neither factor"),
                    };
                }
                logs[row] = l;
            }
        }
        let lmax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lmax = if lmax.is_finite() { lmax } else { 0.0 };
        let scale: Vec<f64> = logs.iter().map(|l| (l - lmax).exp()).collect();
        let kron = linalg::kron(&self.weights, &other.weights);
        let weights = DMatrix::from_fn(n, n, |r, s| scale[r] * kron[(r, s)] * scale[s]);
        GaussianPsdModel::from_parts(
            anchors,
            precision,
            weights,
            groups,
            self.log_scale + other.log_scale + 2.0 * lmax,
        )
    }

    /// `h(x) = ∫ f(x, y) dy` over `domain` (a box over the group's coordinates, or all of space).
    /// Anchors that coincide once `y` is removed are merged, so the order never grows.
    pub fn marginalize(&self, group: &str, domain: &Domain) -> Result<Self> {
        let range = self.groups.range(group)?;
        domain.check_dim(range.len())?;
        let coords: Vec<usize> = range.clone().collect();
        let bounds: Vec<_> = (0..range.len()).map(|k| domain.bounds(k)).collect();
        let w = self.pair_integrals(&coords, &bounds);
        let mut weights = self.weights.component_mul(&w);
        linalg::symmetrize(&mut weights);
        let keep: Vec<usize> = (0..self.dim()).filter(|k| !range.contains(k)).collect();
        let out = GaussianPsdModel::from_parts(
            self.anchors.select_columns(&keep),
            self.precision.select_rows(&keep),
            weights,
            self.groups.without(group)?,
            self.log_scale,
        )?;
        Ok(out.merge_duplicate_anchors())
    }

    /// Normalized copy and the original mass `Z`.
    pub fn normalize(&self, domain: &Domain) -> Result<(Self, f64)> {
        let z = self.integral(domain)?;
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DegenerateMass { mass: z });
        }
        let mut out = self.clone();
        out.log_scale -= z.ln();
        Ok((out, z))
    }

    /// Closed-form mean `∫ x f(x) dx / ∫ f(x) dx` over `domain`.
    pub fn mean(&self, domain: &Domain) -> Result<Vec<f64>> {
        domain.check_dim(self.dim())?;
        let d = self.dim();
        let m = self.order();
        let mut z = 0.0;
        let mut first = vec![0.0; d];
        for i in 0..m {
            for j in 0..m {
                let a = self.weights[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let mut zero = Vec::with_capacity(d);
                let mut one = Vec::with_capacity(d);
                for k in 0..d {
                    let eta = self.precision[k];
                    let (xi, xj) = (self.anchors[(i, k)], self.anchors[(j, k)]);
                    let diff = xi - xj;
                    let c = (-0.5 * eta * diff * diff).exp();
                    let p = 2.0 * eta;
                    let mid = 0.5 * (xi + xj);
                    let j0 = gauss_interval(p, mid, domain.bounds(k));
                    let j1 = mid * j0
                        + match domain.bounds(k) {
                            None => 0.0,
                            Some((lo, hi)) => {
                                ((-p * (lo - mid).powi(2)).exp() - (-p * (hi - mid).powi(2)).exp()) / (2.0 * p)
                            }
                        };
                    zero.push(c * j0);
                    one.push(c * j1);
                }
                let full: f64 = zero.iter().product();
                z += a * full;
                for k in 0..d {
                    let others: f64 = (0..d).filter(|&o| o != k).map(|o| zero[o]).product();
                    first[k] += a * one[k] * others;
                }
            }
        }
        if !(z > 0.0) {
            return Err(Error::DegenerateMass { mass: z });
        }
        Ok(first.into_iter().map(|v| v / z).collect())
    }

    /// Gaussian mixture `Σ α_k N_k` written as a diagonal-weight model.
    ///
    /// `precision` is the coefficient of each component's exponent, so a component reads
    /// `Π_k √(η_k/π) exp(-Σ_k η_k (x_k - μ_k)²)`; a unit-variance normal has `η = 1/2`.
    /// The kernel precision of the returned model is `η / 2`.
    pub fn from_gmm(weights: &[f64], means: &DMatrix<f64>, precision: &DVector<f64>) -> Result<Self> {
        if weights.len() != means.nrows() {
            return Err(Error::DimensionMismatch {
                expected: means.nrows(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        let norm: f64 = precision
            .iter()
            .map(|&e| (e / std::f64::consts::PI).sqrt())
            .product();
        let diag = DVector::from_iterator(weights.len(), weights.iter().map(|w| w * norm));
        Self::with_single_group(means.clone(), precision / 2.0, DMatrix::from_diagonal(&diag))
    }

    /// Square of a Gaussian linear model `(wᵀ Φ_η(x))²`, i.e. `A = w wᵀ`.
    pub fn from_linear_square(w: &DVector<f64>, anchors: &DMatrix<f64>, precision: &DVector<f64>) -> Result<Self> {
        if w.len() != anchors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: anchors.nrows(),
                got: w.len(),
            });
        }
        Self::with_single_group(anchors.clone(), precision.clone(), w * w.transpose())
    }

    /// Uniform density on a box as an order-one model over `group`; the kernel precision is
    /// far below rounding, so the feature is exactly 1 at every representable point of the box.
    pub fn uniform(domain: &Domain, group: &str) -> Result<Self> {
        let bounds = domain.box_bounds()?;
        let d = bounds.len();
        let center = DMatrix::from_fn(1, d, |_, k| 0.5 * (bounds[k].0 + bounds[k].1));
        GaussianPsdModel::new(
            center,
            DVector::from_element(d, 1e-300),
            DMatrix::from_element(1, 1, 1.0 / domain.volume()),
            VariableGroups::single(group, d),
        )
    }

    /// Constant model `c ≥ 0` of dimension zero.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::InvalidParameter("constant must be nonnegative".into()));
        }
        GaussianPsdModel::from_parts(
            DMatrix::zeros(1, 0),
            DVector::zeros(0),
            DMatrix::from_element(1, 1, c),
            VariableGroups::new(Vec::<(String, usize)>::new())?,
            0.0,
        )
    }

    /// Sums rows/columns of anchors that coincide exactly. `ΦᵀAΦ = φᵀ(SᵀAS)φ` for the selection `S`.
    pub fn merge_duplicate_anchors(self) -> Self {
        let m = self.order();
        let d = self.dim();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(m);
        let mut target = Vec::with_capacity(m);
        let mut firsts = Vec::new();
        for i in 0..m {
            let key: Vec<u64> = (0..d).map(|k| self.anchors[(i, k)].to_bits()).collect();
            let next = index.len();
            let t = *index.entry(key).or_insert(next);
            if t == next {
                firsts.push(i);
            }
            target.push(t);
        }
        let n = index.len();
        if n == m {
            return self;
        }
        let mut weights = DMatrix::zeros(n, n);
        for i in 0..m {
            for j in 0..m {
                weights[(target[i], target[j])] += self.weights[(i, j)];
            }
        }
        GaussianPsdModel {
            anchors: self.anchors.select_rows(&firsts),
            precision: self.precision,
            weights,
            groups: self.groups,
            log_scale: self.log_scale,
        }
    }

    /// Drops anchors whose whole weight row is at most `rel_tol · max|A|`.
    pub fn prune(&self, rel_tol: f64) -> Self {
        let scale = linalg::max_abs(&self.weights);
        let keep: Vec<usize> = (0..self.order())
            .filter(|&i| self.weights.row(i).iter().any(|v| v.abs() > rel_tol * scale))
            .collect();
        if keep.len() == self.order() || keep.is_empty() {
            return self.clone();
        }
        GaussianPsdModel {
            anchors: self.anchors.select_rows(&keep),
            precision: self.precision.clone(),
            weights: self.weights.select_rows(&keep).select_columns(&keep),
            groups: self.groups.clone(),
            log_scale: self.log_scale,
        }
    }

    /// `g(x) = ∫ Q(u, x) f(u) du` with `Q = self`, `u = group`.
    ///
    /// Equivalent to `marginalize(product(f, Q), u)` but computed without forming the
    /// `(M_f M_Q)²` product: `g = Φ_xᵀ (A_Q ∘ W) Φ_x` with `W_kl = ∫ φ_k(u) φ_l(u) f(u) du`,
    /// so the output order equals `order(Q)`.
    pub fn markov_step(&self, group: &str, f: &GaussianPsdModel, domain: &Domain) -> Result<Self> {
        let range = self.groups.range(group)?;
        if f.dim() != range.len() {
            return Err(Error::IncompatibleGroups(format!(
                "transition group `{group}` has dimension {} but the input model has {}",
                range.len(),
                f.dim()
            )));
        }
        domain.check_dim(range.len())?;
        let du = range.len();
        let bounds: Vec<Option<(f64, f64)>> = (0..du).map(|k| domain.bounds(k)).collect();

        // reduced pairs of the input model: weight, centers, precision per coordinate
        let mf = f.order();
        let mut f_pairs: Vec<(f64, Vec<f64>)> = Vec::new();
        for i in 0..mf {
            for j in i..mf {
                let b = f.weights[(i, j)];
                if b == 0.0 {
                    continue;
                }
                let mult = if i == j { 1.0 } else { 2.0 };
                let mut c = 0.0;
                let mut centers = Vec::with_capacity(du);
                for k in 0..du {
                    let (vi, vj) = (f.anchors[(i, k)], f.anchors[(j, k)]);
                    c += 0.5 * f.precision[k] * (vi - vj).powi(2);
                    centers.push(0.5 * (vi + vj));
                }
                let w = mult * b * (-c).exp();
                if w != 0.0 {
                    f_pairs.push((w, centers));
                }
            }
        }
        let mq = self.order();
        let uq: Vec<usize> = range.clone().collect();
        let prec_q: Vec<f64> = uq.iter().map(|&c| 2.0 * self.precision[c]).collect();
        let prec_f: Vec<f64> = (0..du).map(|k| 2.0 * f.precision[k]).collect();
        let total: Vec<f64> = prec_q.iter().zip(&prec_f).map(|(a, b)| a + b).collect();
        let gamma: Vec<f64> = prec_q.iter().zip(&prec_f).map(|(a, b)| a * b / (a + b)).collect();
        let whole_const: f64 = total.iter().map(|p| (std::f64::consts::PI / p).sqrt()).product();
        let f_scale = f.log_scale.exp();

        let rows: Vec<Vec<f64>> = (0..mq)
            .into_par_iter()
            .map(|k| {
                let mut row = vec![0.0; mq];
                for l in k..mq {
                    if self.weights[(k, l)] == 0.0 {
                        continue;
                    }
                    let mut c1 = 0.0;
                    let mut m1 = Vec::with_capacity(du);
                    for &c in &uq {
                        let (uk, ul) = (self.anchors[(k, c)], self.anchors[(l, c)]);
                        c1 += 0.5 * self.precision[c] * (uk - ul).powi(2);
                        m1.push(0.5 * (uk + ul));
                    }
                    let mut acc = 0.0;
                    for (w, m2) in &f_pairs {
                        let mut q = 0.0;
                        for t in 0..du {
                            q += gamma[t] * (m1[t] - m2[t]).powi(2);
                        }
                        let mut v = w * (-q).exp();
                        if v == 0.0 {
                            continue;
                        }
                        if bounds.iter().all(Option::is_none) {
                            v *= whole_const;
                        } else {
                            for t in 0..du {
                                let center = (prec_q[t] * m1[t] + prec_f[t] * m2[t]) / total[t];
                                v *= gauss_interval(total[t], center, bounds[t]);
                            }
                        }
                        acc += v;
                    }
                    row[l] = acc * (-c1).exp() * f_scale;
                }
                row
            })
            .collect();
        let mut weights = DMatrix::zeros(mq, mq);
        for k in 0..mq {
            for l in k..mq {
                let v = self.weights[(k, l)] * rows[k][l];
                weights[(k, l)] = v;
                weights[(l, k)] = v;
            }
        }
        let keep: Vec<usize> = (0..self.dim()).filter(|k| !range.contains(k)).collect();
        let out = GaussianPsdModel::from_parts(
            self.anchors.select_columns(&keep),
            self.precision.select_rows(&keep),
            weights,
            self.groups.without(group)?,
            self.log_scale,
        )?;
        Ok(out.merge_duplicate_anchors())
    }
}

/// Clamps rounding-level negatives to zero and rejects larger violations.
pub(crate) fn clamp_density(value: f64, magnitude: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -EVAL_NEG_TOL * magnitude.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeDensity { value })
    }
}
