use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridDensity, TensorGrid};
use crate::hmm::DensityKernel;
use crate::psd::GaussianPsdModel;

use super::trace::{FilterTrace, Method, Posterior};

/// Default cap on the number of grid cells.
pub const DEFAULT_CELL_CAP: usize = 4096;

/// Transition used by the grid filter.
#[derive(Debug, Clone, Copy)]
pub enum GridTransition<'a> {
    /// Any kernel; tabulated as a dense `cells × cells` matrix.
    Kernel(&'a DensityKernel),
    /// A Gaussian PSD model over groups `"u"`, `"x"`; its separable features avoid the dense matrix.
    Psd(&'a GaussianPsdModel),
}

enum Prepared {
    Dense(Vec<Vec<f64>>),
    Factored {
        /// `cells × M` features in the `u` coordinates.
        phi_u: DMatrix<f64>,
        /// `cells × M` features in the `x` coordinates.
        phi_x: DMatrix<f64>,
        weights: DMatrix<f64>,
    },
}

fn features(model: &GaussianPsdModel, grid: &TensorGrid, coords: std::ops::Range<usize>) -> DMatrix<f64> {
    let m = model.order();
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let p = grid.point(c);
            (0..m)
                .map(|i| {
                    let q: f64 = coords
                        .clone()
                        .zip(&p)
                        .map(|(k, &v)| model.precision()[k] * (v - model.anchors()[(i, k)]).powi(2))
                        .sum();
                    (-q).exp()
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(grid.len(), m, |r, c| rows[r][c])
}

impl Prepared {
    fn new(transition: &GridTransition, grid: &TensorGrid) -> Result<Self> {
        let d = grid.dim();
        match transition {
            GridTransition::Kernel(k) => {
                if k.dims() != (d, d) {
                    return Err(Error::DimensionMismatch { expected: d, got: k.dims().1 });
                }
                let points = grid.points();
                let rows = (0..grid.len())
                    .into_par_iter()
                    .map(|i| points.iter().map(|x| k.density(&points[i], x)).collect())
                    .collect();
                Ok(Prepared::Dense(rows))
            }
            GridTransition::Psd(q) => {
                let ru = q.groups().range("u")?;
                let rx = q.groups().range("x")?;
                if ru.len() != d || rx.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: rx.len() });
                }
                Ok(Prepared::Factored {
                    phi_u: features(q, grid, ru),
                    phi_x: features(q, grid, rx),
                    weights: q.effective_weights(),
                })
            }
        }
    }

    /// `p'(x_j) = Σ_i Q(x_i, x_j) π(x_i) h`.
    fn predict(&self, values: &[f64], h: f64) -> Vec<f64> {
        match self {
            Prepared::Dense(rows) => {
                let n = values.len();
                let mut out = vec![0.0; n];
                for (i, row) in rows.iter().enumerate() {
                    let w = values[i] * h;
                    if w == 0.0 {
                        continue;
                    }
                    for (o, &t) in out.iter_mut().zip(row) {
                        *o += w * t;
                    }
                }
                out
            }
            Prepared::Factored { phi_u, phi_x, weights } => {
                let mut scaled = phi_u.clone();
                for (r, &v) in values.iter().enumerate() {
                    scaled.row_mut(r).scale_mut(v * h);
                }
                let w = phi_u.transpose() * scaled;
                let c = weights.component_mul(&w);
                let left = phi_x * c;
                (0..values.len())
                    .map(|j| left.row(j).dot(&phi_x.row(j)).max(0.0))
                    .collect()
            }
        }
    }
}

/// Dense Bayes recursion on the prior's grid: predict with `transition`, multiply by
/// `likelihood(x, y)`, normalize by the midpoint rule.
pub fn grid_filter_run<L>(
    prior: &GridDensity,
    transition: GridTransition<'_>,
    likelihood: &L,
    observations: &[Vec<f64>],
    cell_cap: usize,
) -> Result<FilterTrace>
where
    L: Fn(&[f64], &[f64]) -> f64 + Sync + ?Sized,
{
    let grid = prior.grid().clone();
    if grid.len() > cell_cap {
        return Err(Error::GridTooLarge {
            cells: grid.len(),
            cap: cell_cap,
        });
    }
    let prepared = Prepared::new(&transition, &grid)?;
    let points = grid.points();
    let h = grid.cell_volume();
    let mut trace = FilterTrace::new(Method::Grid, Posterior::Grid(prior.clone()));
    let mut values = prior.values().to_vec();
    for (k, y) in observations.iter().enumerate() {
        let step = k + 1;
        let start = Instant::now();
        let predicted = prepared.predict(&values, h);
        let lik: Vec<f64> = points.par_iter().map(|x| likelihood(x, y)).collect();
        let joint: Vec<f64> = predicted.iter().zip(&lik).map(|(p, l)| p * l).collect();
        let z: f64 = joint.iter().sum::<f64>() * h;
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::ZeroEvidence {
                step,
                observation: y.clone(),
            });
        }
        values = joint.into_iter().map(|v| v / z).collect();
        let wall = start.elapsed().as_nanos() as u64;
        trace.push(Posterior::Grid(GridDensity::new(grid.clone(), values.clone())?), z.ln(), wall);
    }
    Ok(trace)
}
