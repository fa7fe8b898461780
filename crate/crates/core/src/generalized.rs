//! Generalized Gaussian PSD models `f(x) = Tr(A B(x))`, `B(x)_ij = e^{c_ij} exp(-(x-μ_ij)ᵀ P_ij (x-μ_ij))`,
//! with full precision matrices per entry.
//!
//! All integrals and marginals here are over the whole space. Precision blocks that are only
//! positive semidefinite are handled with an eigenvalue pseudo-inverse where the algebra stays
//! exact (partial evaluation, product); the model then carries a `regularized` flag.

use nalgebra::{DMatrix, DVector};

use crate::domain::{Domain, VariableGroups};
use crate::error::{Error, Result};
use crate::learning::{learn_rank_one, learn_rank_one_at, LearnConfig};
use crate::linalg::{self, PsdFactor};
use crate::psd::{clamp_density, GaussianPsdModel};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// One entry `e^{c} exp(-(x-μ)ᵀ P (x-μ))` of `B(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub log_scale: f64,
    pub precision: DMatrix<f64>,
    pub center: DVector<f64>,
}

impl Component {
    pub fn new(log_scale: f64, precision: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        let d = center.len();
        if precision.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: precision.nrows(),
            });
        }
        if !linalg::is_symmetric(&precision, linalg::SYMMETRY_TOL) || !linalg::is_psd(&precision) {
            return Err(Error::InvalidParameter(
                "component precision must be symmetric PSD".into(),
            ));
        }
        Ok(Component {
            log_scale,
            precision,
            center,
        })
    }

    fn log_value(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(self.center.iter()).map(|(a, b)| a - b));
        self.log_scale - (diff.transpose() * &self.precision * &diff)[(0, 0)]
    }

    /// `log ∫ e^{c} k_P(x, μ) dx = c + (d/2) log π - ½ log det P`; needs `P` positive definite.
    fn log_mass(&self) -> Result<f64> {
        let d = self.center.len();
        let f = PsdFactor::strict(&self.precision, "component integral")?;
        Ok(self.log_scale + 0.5 * d as f64 * LN_PI - 0.5 * f.logdet)
    }

    fn quad(&self) -> f64 {
        (self.center.transpose() * &self.precision * &self.center)[(0, 0)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPsdModel {
    weights: DMatrix<f64>,
    /// Row-major `M × M` grid of components.
    entries: Vec<Component>,
    groups: VariableGroups,
    regularized: bool,
}

impl GeneralizedPsdModel {
    pub fn new(weights: DMatrix<f64>, entries: Vec<Component>, groups: VariableGroups) -> Result<Self> {
        let m = weights.nrows();
        if !weights.is_square() || entries.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                got: entries.len(),
            });
        }
        let d = groups.dim();
        for e in &entries {
            if e.center.len() != d || e.precision.shape() != (d, d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: e.center.len(),
                });
            }
        }
        let model = GeneralizedPsdModel {
            weights,
            entries,
            groups,
            regularized: false,
        };
        model.check_invariants()?;
        Ok(model)
    }

    pub fn check_invariants(&self) -> Result<()> {
        if !linalg::is_symmetric(&self.weights, linalg::SYMMETRY_TOL) || !linalg::is_psd(&self.weights) {
            return Err(Error::InvalidParameter("weight matrix must be symmetric PSD".into()));
        }
        let m = self.order();
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b) = (self.entry(i, j), self.entry(j, i));
                let scale = linalg::max_abs(&a.precision).max(1.0);
                let same = (a.log_scale - b.log_scale).abs() <= 1e-9 * a.log_scale.abs().max(1.0)
                    && (&a.precision - &b.precision).amax() <= 1e-9 * scale
                    && (&a.center - &b.center).amax() <= 1e-9 * a.center.amax().max(1.0);
                if !same {
                    return Err(Error::InvalidParameter(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        for e in &self.entries {
            if !linalg::is_psd(&e.precision) {
                return Err(Error::InvalidParameter("entry precision is not PSD".into()));
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.groups.dim()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn entry(&self, i: usize, j: usize) -> &Component {
        &self.entries[i * self.order() + j]
    }

    pub fn entries(&self) -> &[Component] {
        &self.entries
    }

    pub fn groups(&self) -> &VariableGroups {
        &self.groups
    }

    /// Set when a singular block was inverted through the pseudo-inverse fallback.
    pub fn regularized(&self) -> bool {
        self.regularized
    }

    pub(crate) fn with_regularized(mut self, regularized: bool) -> Self {
        self.regularized = regularized;
        self
    }

    /// Order-one model of the normal density `N(mean, cov)` over group `"x"`.
    pub fn gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let cov2 = cov * 2.0;
        let fac = PsdFactor::strict(&cov2, "covariance")?;
        let mut precision = fac.inverse();
        linalg::symmetrize(&mut precision);
        // ∫ exp(-(x-μ)ᵀ(2Σ)⁻¹(x-μ)) = π^{d/2} det(2Σ)^{1/2}
        let log_scale = -0.5 * d as f64 * LN_PI - 0.5 * fac.logdet;
        GeneralizedPsdModel::new(
            DMatrix::from_element(1, 1, 1.0),
            vec![Component::new(log_scale, precision, mean.clone())?],
            VariableGroups::single("x", d),
        )
    }

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

    fn from_parts(weights: DMatrix<f64>, entries: Vec<Component>, groups: VariableGroups, regularized: bool) -> Self {
        GeneralizedPsdModel {
            weights,
            entries,
            groups,
            regularized,
        }
    }

    /// `Tr(A B(x))`, tiny negative rounding clamped to zero.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let m = self.order();
        let mut value = 0.0;
        let mut magnitude = 0.0;
        for i in 0..m {
            for j in 0..m {
                let a = self.weights[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let t = a * self.entry(i, j).log_value(x).exp();
                value += t;
                magnitude += t.abs();
            }
        }
        clamp_density(value, magnitude)
    }

    /// `Z = Tr(A ∘ exp∘(C) ∘ C(P))` over the whole space; every weighted entry needs a positive definite `P`.
    pub fn integral(&self) -> Result<f64> {
        let m = self.order();
        let mut total = 0.0;
        let mut magnitude = 0.0;
        for i in 0..m {
            for j in 0..m {
                let a = self.weights[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let t = a * self.entry(i, j).log_mass()?.exp();
                total += t;
                magnitude += t.abs();
            }
        }
        clamp_density(total, magnitude)
    }

    pub fn normalize(&self) -> Result<(Self, f64)> {
        let z = self.integral()?;
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DegenerateMass { mass: z });
        }
        let lz = z.ln();
        let mut out = self.clone();
        for e in &mut out.entries {
            e.log_scale -= lz;
        }
        Ok((out, z))
    }

    /// Whole-space mean of the normalized density.
    pub fn mean(&self) -> Result<DVector<f64>> {
        let m = self.order();
        let mut z = 0.0;
        let mut first = DVector::zeros(self.dim());
        for i in 0..m {
            for j in 0..m {
                let a = self.weights[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let e = self.entry(i, j);
                let w = a * e.log_mass()?.exp();
                z += w;
                first += &e.center * w;
            }
        }
        if !(z > 0.0) {
            return Err(Error::DegenerateMass { mass: z });
        }
        Ok(first / z)
    }

    /// Whole-space covariance of the normalized density.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let mean = self.mean()?;
        let m = self.order();
        let d = self.dim();
        let mut z = 0.0;
        let mut second = DMatrix::zeros(d, d);
        for i in 0..m {
            for j in 0..m {
                let a = self.weights[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let e = self.entry(i, j);
                let w = a * e.log_mass()?.exp();
                let cov = PsdFactor::strict(&e.precision, "covariance")?.inverse() * 0.5;
                let dm = &e.center - &mean;
                z += w;
                second += (cov + &dm * dm.transpose()) * w;
            }
        }
        Ok(second / z)
    }

    /// `h(x) = f(x, y0)`.
    pub fn partial_eval(&self, group: &str, value: &[f64]) -> Result<Self> {
        let range = self.groups.range(group)?;
        if value.len() != range.len() {
            return Err(Error::DimensionMismatch {
                expected: range.len(),
                got: value.len(),
            });
        }
        let ys: Vec<usize> = range.clone().collect();
        let xs: Vec<usize> = (0..self.dim()).filter(|k| !range.contains(k)).collect();
        let y0 = DVector::from_column_slice(value);
        let mut regularized = self.regularized;
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let pxx = e.precision.select_rows(&xs).select_columns(&xs);
                let pxy = e.precision.select_rows(&xs).select_columns(&ys);
                let pyy = e.precision.select_rows(&ys).select_columns(&ys);
                let mu_x = e.center.select_rows(&xs);
                let delta = &y0 - e.center.select_rows(&ys);
                let mut c = e.log_scale - (delta.transpose() * &pyy * &delta)[(0, 0)];
                let mut center = mu_x.clone();
                if !xs.is_empty() {
                    let coupling = &pxy * &delta;
                    let fac = PsdFactor::new(&pxx);
                    regularized |= fac.regularized && coupling.amax() > 0.0;
                    let shift = fac.solve_vec(&coupling);
                    c += coupling.dot(&shift);
                    center = mu_x - shift;
                }
                Component {
                    log_scale: c,
                    precision: pxx,
                    center,
                }
            })
            .collect();
        Ok(Self::from_parts(
            self.weights.clone(),
            entries,
            self.groups.without(group)?,
            regularized,
        ))
    }

    /// `h(x) = ∫ f(x, y) dy` over the whole space of the group.
    pub fn marginalize(&self, group: &str) -> Result<Self> {
        let range = self.groups.range(group)?;
        let ys: Vec<usize> = range.clone().collect();
        let xs: Vec<usize> = (0..self.dim()).filter(|k| !range.contains(k)).collect();
        let dy = ys.len() as f64;
        let m = self.order();
        let mut entries = Vec::with_capacity(self.entries.len());
        for (idx, e) in self.entries.iter().enumerate() {
            let pxx = e.precision.select_rows(&xs).select_columns(&xs);
            let pxy = e.precision.select_rows(&xs).select_columns(&ys);
            let pyy = e.precision.select_rows(&ys).select_columns(&ys);
            let weighted = self.weights[(idx / m, idx % m)] != 0.0;
            let (precision, log_scale) = match PsdFactor::strict(&pyy, "marginalized block") {
                Ok(fac) => (
                    &pxx - &pxy * fac.solve_mat(&pxy.transpose()),
                    e.log_scale + 0.5 * dy * LN_PI - 0.5 * fac.logdet,
                ),
                Err(err) if weighted => return Err(err),
                Err(_) => (pxx, e.log_scale),
            };
            let mut precision = precision;
            linalg::symmetrize(&mut precision);
            entries.push(Component {
                log_scale,
                precision,
                center: e.center.select_rows(&xs),
            });
        }
        Ok(Self::from_parts(
            self.weights.clone(),
            entries,
            self.groups.without(group)?,
            self.regularized,
        ))
    }

    /// Pointwise product over the union of the two group lists; order `M1 · M2`, `A' = A ⊗ Ã`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let groups = self.groups.union(&other.groups)?;
        let d = groups.dim();
        let map_f = groups.coordinate_map(&self.groups);
        let map_g = groups.coordinate_map(&other.groups);
        let (m1, m2) = (self.order(), other.order());
        let n = m1 * m2;
        let embed = |e: &Component, map: &[Option<usize>]| {
            let mut p = DMatrix::zeros(d, d);
            let mut mu = DVector::zeros(d);
            for a in 0..d {
                if let Some(ia) = map[a] {
                    mu[a] = e.center[ia];
                    for b in 0..d {
                        if let Some(ib) = map[b] {
                            p[(a, b)] = e.precision[(ia, ib)];
                        }
                    }
                }
            }
            (p, mu)
        };
        let f_emb: Vec<_> = self.entries.iter().map(|e| embed(e, &map_f)).collect();
        let g_emb: Vec<_> = other.entries.iter().map(|e| embed(e, &map_g)).collect();
        let mut regularized = self.regularized || other.regularized;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..m1 {
            for k in 0..m2 {
                for j in 0..m1 {
                    for l in 0..m2 {
                        let (ef, eg) = (self.entry(i, j), other.entry(k, l));
                        let (pf, muf) = &f_emb[i * m1 + j];
                        let (pg, mug) = &g_emb[k * m2 + l];
                        let mut precision = pf + pg;
                        linalg::symmetrize(&mut precision);
                        let natural = pf * muf + pg * mug;
                        let fac = PsdFactor::new(&precision);
                        regularized |= fac.regularized;
                        let center = fac.solve_vec(&natural);
                        let log_scale = ef.log_scale + eg.log_scale + natural.dot(&center) - ef.quad() - eg.quad();
                        entries.push(Component {
                            log_scale,
                            precision,
                            center,
                        });
                    }
                }
            }
        }
        Ok(Self::from_parts(
            linalg::kron(&self.weights, &other.weights),
            entries,
            groups,
            regularized,
        ))
    }

    /// Gaussian PSD model viewed as a generalized one: `P_ij = 2 diag(η)`, `μ_ij = (x_i + x_j)/2`,
    /// `c_ij = s - ½ Σ_k η_k (x_ik - x_jk)²`.
    pub fn embed_psd(m: &GaussianPsdModel) -> Self {
        let order = m.order();
        let d = m.dim();
        let eta = m.precision();
        let x = m.anchors();
        let precision = DMatrix::from_diagonal(&(eta * 2.0));
        let mut entries = Vec::with_capacity(order * order);
        for i in 0..order {
            for j in 0..order {
                let mut c = m.log_scale();
                let mut center = DVector::zeros(d);
                for k in 0..d {
                    let diff = x[(i, k)] - x[(j, k)];
                    c -= 0.5 * eta[k] * diff * diff;
                    center[k] = 0.5 * (x[(i, k)] + x[(j, k)]);
                }
                entries.push(Component {
                    log_scale: c,
                    precision: precision.clone(),
                    center,
                });
            }
        }
        Self::from_parts(m.weights().clone(), entries, m.groups().clone(), false)
    }

    /// Induced rank-one model of `g(x) = Σ_j α_j k_{P_j}(x, μ_j)`, i.e. `f = g²`.
    pub fn from_linear_square(
        alpha: &DVector<f64>,
        precisions: &[DMatrix<f64>],
        centers: &[DVector<f64>],
        groups: VariableGroups,
    ) -> Result<Self> {
        let m = alpha.len();
        if precisions.len() != m || centers.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: precisions.len().min(centers.len()),
            });
        }
        let mut regularized = false;
        let mut entries = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let mut precision = &precisions[i] + &precisions[j];
                linalg::symmetrize(&mut precision);
                let natural = &precisions[i] * &centers[i] + &precisions[j] * &centers[j];
                let fac = PsdFactor::new(&precision);
                regularized |= fac.regularized;
                let center = fac.solve_vec(&natural);
                let quad_i = (centers[i].transpose() * &precisions[i] * &centers[i])[(0, 0)];
                let quad_j = (centers[j].transpose() * &precisions[j] * &centers[j])[(0, 0)];
                entries.push(Component {
                    log_scale: natural.dot(&center) - quad_i - quad_j,
                    precision,
                    center,
                });
            }
        }
        let mut model = GeneralizedPsdModel::new(alpha * alpha.transpose(), entries, groups)?;
        model.regularized = regularized;
        Ok(model)
    }
}

/// Normalized one-step posterior `μ'(x) ∝ ∫ q(u, x) g(x, y) μ(u) du`.
///
/// `q` must have groups `["u", "x"]` (any order) and `g` groups containing `"x"` and `"y"`;
/// `mu` is a single-group model over the state. The output is over group `"x"` with order
/// at most `order(μ) · order(q) · order(g)`.
pub fn filter_step(
    mu: &GeneralizedPsdModel,
    q: &GeneralizedPsdModel,
    g: &GeneralizedPsdModel,
    y_obs: &[f64],
) -> Result<(GeneralizedPsdModel, f64)> {
    let mu_name = single_group_name(mu.groups())?;
    let mu_u = mu.clone().rename_group(&mu_name, "u")?;
    let likelihood = g.partial_eval("y", y_obs)?;
    let predicted = mu_u.product(q)?.marginalize("u")?;
    let joint = predicted.product(&likelihood)?;
    let z = joint.integral()?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::ZeroEvidence {
            step: 0,
            observation: y_obs.to_vec(),
        });
    }
    let (post, _) = joint.normalize()?;
    Ok((post, z))
}

fn single_group_name(groups: &VariableGroups) -> Result<String> {
    if groups.len() != 1 {
        return Err(Error::IncompatibleGroups(format!(
            "expected a single-group state model, got {:?}",
            groups.names()
        )));
    }
    Ok(groups.names()[0].to_string())
}

/// Conditional Gaussian `p(y | x) = N(y; F x + b, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussianLinear {
    pub transition: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl ConditionalGaussianLinear {
    pub fn new(transition: DMatrix<f64>, offset: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let dy = transition.nrows();
        if offset.len() != dy || covariance.shape() != (dy, dy) {
            return Err(Error::DimensionMismatch {
                expected: dy,
                got: offset.len(),
            });
        }
        PsdFactor::strict(&covariance, "conditional covariance")?;
        Ok(ConditionalGaussianLinear {
            transition,
            offset,
            covariance,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.transition.ncols(), self.transition.nrows())
    }

    /// Log of the normalizing constant `(2π)^{-d'/2} det(Σ)^{-1/2}`.
    pub fn log_norm(&self) -> f64 {
        let dy = self.offset.len() as f64;
        let fac = PsdFactor::new(&self.covariance);
        -0.5 * dy * (2.0 * std::f64::consts::PI).ln() - 0.5 * fac.logdet
    }

    pub fn density(&self, x: &[f64], y: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let r = DVector::from_column_slice(y) - (&self.transition * xv + &self.offset);
        let fac = PsdFactor::new(&self.covariance);
        (self.log_norm() - 0.5 * r.dot(&fac.solve_vec(&r))).exp()
    }
}

/// Order-one generalized model `p̂(x, y)` with `p(y|x) / p̂(x, y) = exp(λ ‖(x, y)‖²)`, for a given `λ > 0`.
///
/// Groups are `["x": d, "y": d']`.
pub fn kalman_component_with_lambda(p: &ConditionalGaussianLinear, lambda: f64) -> Result<GeneralizedPsdModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let (dx, dy) = p.dims();
    let n = dx + dy;
    // L = (F  -I), so that L (x, y) = F x - y
    let mut l = DMatrix::zeros(dy, n);
    l.view_mut((0, 0), (dy, dx)).copy_from(&p.transition);
    for k in 0..dy {
        l[(k, dx + k)] = -1.0;
    }
    // the Gaussian exponent is ½ rᵀΣ⁻¹r, i.e. rᵀ(2Σ)⁻¹r in the kernel convention
    let sigma2 = &p.covariance * 2.0;
    let s_fac = PsdFactor::strict(&sigma2, "conditional covariance")?;
    let sl = s_fac.solve_mat(&l);
    let mut precision = l.transpose() * &sl + DMatrix::identity(n, n) * lambda;
    linalg::symmetrize(&mut precision);
    let beta = sl.transpose() * &p.offset;
    let p_fac = PsdFactor::strict(&precision, "regularized precision")?;
    let center = -p_fac.solve_vec(&beta);
    let woodbury = &sigma2 * lambda + &l * l.transpose();
    let w_fac = PsdFactor::strict(&woodbury, "woodbury system")?;
    let log_scale = p.log_norm() - lambda * p.offset.dot(&w_fac.solve_vec(&p.offset));
    let groups = VariableGroups::new([("x", dx), ("y", dy)])?;
    GeneralizedPsdModel::new(
        DMatrix::from_element(1, 1, 1.0),
        vec![Component::new(log_scale, precision, center)?],
        groups,
    )
}

/// Order-one approximation with `sup_{‖(x,y)‖ ≤ R} |p(y|x) - p̂(x, y)| ≤ ε`.
///
/// Uses `λ = log(1 + ε / p_max) / R²` with `p_max = (2π)^{-d'/2} det(Σ)^{-1/2}`, since
/// `p - p̂ = p̂ (e^{λ‖u‖²} - 1) ≤ p_max (e^{λ R²} - 1)`.
pub fn kalman_component(
    p: &ConditionalGaussianLinear,
    radius: f64,
    epsilon: f64,
) -> Result<(GeneralizedPsdModel, f64)> {
    if !(radius > 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("radius and epsilon must be positive".into()));
    }
    let p_max = p.log_norm().exp();
    let lambda = (epsilon / p_max).ln_1p() / (radius * radius);
    if !(lambda > 0.0) || !lambda.is_finite() || lambda < f64::MIN_POSITIVE {
        return Err(Error::Unachievable(format!(
            "epsilon {epsilon} gives lambda {lambda} at radius {radius}"
        )));
    }
    // λ below rounding of the precision matrix cannot be represented
    if lambda < 1e-16 * p.covariance.amax().recip() {
        return Err(Error::Unachievable(format!("lambda {lambda} underflows the precision")));
    }
    Ok((kalman_component_with_lambda(p, lambda)?, lambda))
}

/// Settings for re-learning a generalized posterior as a fixed-order Gaussian PSD model.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressConfig {
    pub target_order: usize,
    /// Kernel precision; derived from the model when `None`.
    pub precision: Option<DVector<f64>>,
    pub regularization: f64,
    /// Training points per anchor.
    pub samples_per_anchor: usize,
    /// Fixed anchors (`target_order × d`); drawn uniformly from the domain when `None`.
    pub anchors: Option<DMatrix<f64>>,
}

impl CompressConfig {
    pub fn new(target_order: usize) -> Self {
        CompressConfig {
            target_order,
            precision: None,
            regularization: 1e-10,
            samples_per_anchor: 4,
            anchors: None,
        }
    }
}

/// Fits the square root of the normalized model by rank-one kernel ridge regression on `domain`
/// and returns the compressed model normalized over `domain`.
pub fn compress(
    model: &GeneralizedPsdModel,
    config: &CompressConfig,
    domain: &Domain,
    seed: u64,
) -> Result<GaussianPsdModel> {
    domain.check_dim(model.dim())?;
    let (normalized, _) = model.normalize()?;
    let precision = match &config.precision {
        Some(p) => p.clone(),
        None => default_compress_precision(model),
    };
    let m = config.anchors.as_ref().map_or(config.target_order, |a| a.nrows());
    let cfg = LearnConfig {
        n: m * config.samples_per_anchor.max(1),
        m,
        precision,
        regularization: config.regularization,
        domain: domain.clone(),
        seed,
    };
    let f = |x: &[f64]| normalized.evaluate(x).unwrap_or(0.0);
    let learned = match &config.anchors {
        Some(a) => learn_rank_one_at(&f, a, &cfg)?,
        None => learn_rank_one(&f, &cfg)?,
    };
    let learned = learned.with_groups(model.groups().clone())?;
    Ok(learned.normalize(domain)?.0)
}

/// Per-coordinate largest diagonal precision over the weighted diagonal entries; kernels this
/// narrow resolve every component of the model.
fn default_compress_precision(model: &GeneralizedPsdModel) -> DVector<f64> {
    let d = model.dim();
    let mut eta = DVector::from_element(d, f64::MIN_POSITIVE);
    for i in 0..model.order() {
        if model.weights()[(i, i)] <= 0.0 {
            continue;
        }
        let p = &model.entry(i, i).precision;
        for k in 0..d {
            eta[k] = eta[k].max(p[(k, k)]);
        }
    }
    eta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(d: usize, center: &[f64]) -> GeneralizedPsdModel {
        GeneralizedPsdModel::new(
            DMatrix::from_element(1, 1, 1.0),
            vec![Component::new(0.0, DMatrix::identity(d, d), DVector::from_column_slice(center)).unwrap()],
            VariableGroups::single("x", d),
        )
        .unwrap()
    }

    #[test]
    fn evaluate_and_integrate_isotropic() {
        let m = iso(2, &[0.0, 0.0]);
        assert!((m.evaluate(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((m.integral().unwrap() - std::f64::consts::PI).abs() < 1e-13);
        let shifted = iso(2, &[0.7, -3.0]);
        assert!((shifted.integral().unwrap() - std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn zero_weights_evaluate_to_zero() {
        let mut m = iso(1, &[0.0]);
        m.weights = DMatrix::zeros(1, 1);
        assert_eq!(m.evaluate(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn singular_precision_integral_errors() {
        let m = GeneralizedPsdModel::new(
            DMatrix::from_element(1, 1, 1.0),
            vec![Component::new(0.0, DMatrix::zeros(1, 1), DVector::zeros(1)).unwrap()],
            VariableGroups::single("x", 1),
        )
        .unwrap();
        assert!(matches!(m.integral(), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn product_with_constant_scales() {
        let f = iso(1, &[0.2]);
        let c = GeneralizedPsdModel::new(
            DMatrix::from_element(1, 1, 2.5),
            vec![Component::new(0.0, DMatrix::zeros(0, 0), DVector::zeros(0)).unwrap()],
            VariableGroups::new(Vec::<(String, usize)>::new()).unwrap(),
        )
        .unwrap();
        let h = f.product(&c).unwrap();
        assert_eq!(h.order(), 1);
        for x in [-0.5, 0.2, 1.0] {
            assert!((h.evaluate(&[x]).unwrap() - 2.5 * f.evaluate(&[x]).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn kalman_identity_at_unit_point() {
        let p = ConditionalGaussianLinear::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        for lambda in [1e-4, 0.1, 0.7] {
            let m = kalman_component_with_lambda(&p, lambda).unwrap();
            let ratio = p.density(&[1.0], &[1.0]) / m.evaluate(&[1.0, 1.0]).unwrap();
            assert!((ratio / (2.0 * lambda).exp() - 1.0).abs() < 1e-12, "lambda {lambda}");
            // b = 0: the log-scale is exactly the Gaussian normalizer
            assert_eq!(m.entry(0, 0).log_scale, p.log_norm());
        }
    }
}
