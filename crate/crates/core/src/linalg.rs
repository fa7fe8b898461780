//! Small dense linear-algebra helpers shared by the model types.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetry tolerance relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// PSD tolerance relative to the trace.
pub const PSD_TOL: f64 = 1e-10;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// `min eig >= -PSD_TOL * max(trace, 0)`; a zero matrix passes.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let tr = m.trace().max(0.0);
    min_eigenvalue(m) >= -PSD_TOL * tr.max(f64::MIN_POSITIVE) - f64::MIN_POSITIVE
}

/// Result of solving a symmetric PSD system with optional fallbacks.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    inner: Factor,
    /// Natural log of the determinant (pseudo-determinant when singular).
    pub logdet: f64,
    /// True when Cholesky failed and the eigen pseudo-inverse was used.
    pub regularized: bool,
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Pseudo(DMatrix<f64>),
}

impl PsdFactor {
    /// Cholesky when it succeeds, otherwise an eigenvalue pseudo-inverse that drops
    /// eigenvalues below `1e-12 * trace / n`.
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n == 0 {
            return PsdFactor {
                inner: Factor::Pseudo(DMatrix::zeros(0, 0)),
                logdet: 0.0,
                regularized: false,
            };
        }
        if let Some(ch) = nalgebra::Cholesky::new(m.clone()) {
            let l = ch.l_dirty();
            let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
            if logdet.is_finite() {
                return PsdFactor {
                    inner: Factor::Cholesky(ch),
                    logdet,
                    regularized: false,
                };
            }
        }
        let eig = SymmetricEigen::new(m.clone());
        let cutoff = 1e-12 * m.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
        let mut inv = DMatrix::zeros(n, n);
        let mut logdet = 0.0;
        for (k, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev > cutoff {
                let v = eig.eigenvectors.column(k);
                inv += (v * v.transpose()) / ev;
                logdet += ev.ln();
            }
        }
        PsdFactor {
            inner: Factor::Pseudo(inv),
            logdet,
            regularized: true,
        }
    }

    /// Strict variant: errors unless Cholesky succeeds.
    pub fn strict(m: &DMatrix<f64>, context: &str) -> Result<Self> {
        let f = PsdFactor::new(m);
        if f.regularized {
            Err(Error::SingularMatrix(context.to_string()))
        } else {
            Ok(f)
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            Factor::Cholesky(ch) => ch.solve(b),
            Factor::Pseudo(inv) => inv * b,
        }
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.inner {
            Factor::Cholesky(ch) => ch.solve(b),
            Factor::Pseudo(inv) => inv * b,
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        match &self.inner {
            Factor::Cholesky(ch) => ch.inverse(),
            Factor::Pseudo(inv) => inv.clone(),
        }
    }
}

/// Kronecker product `a ⊗ b` with row index `i * b.nrows() + k`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `∫_lo^hi exp(-p (t - m)^2) dt` for `p > 0`; `None` bounds mean infinite.
pub fn gauss_interval(p: f64, m: f64, bounds: Option<(f64, f64)>) -> f64 {
    let full = (std::f64::consts::PI / p).sqrt();
    match bounds {
        None => full,
        Some((lo, hi)) => {
            let s = p.sqrt();
            let a = s * (lo - m);
            let b = s * (hi - m);
            0.5 * full * erf_diff(a, b)
        }
    }
}

/// `erf(b) - erf(a)` for `a <= b`, using complementary functions in the tails.
pub fn erf_diff(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        libm::erfc(a) - libm::erfc(b)
    } else if b <= 0.0 {
        libm::erfc(-b) - libm::erfc(-a)
    } else {
        libm::erf(b) - libm::erf(a)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
