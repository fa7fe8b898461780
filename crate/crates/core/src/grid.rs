//! Piecewise-constant densities on a midpoint tensor grid over a box.

use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Midpoint tensor grid with `cells_per_dim` cells along every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    bounds: Vec<(f64, f64)>,
    cells_per_dim: usize,
}

impl TensorGrid {
    pub fn new(domain: &Domain, cells_per_dim: usize) -> Result<Self> {
        let bounds = domain.box_bounds()?.to_vec();
        if cells_per_dim == 0 || bounds.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one cell and one dimension".into()));
        }
        Ok(TensorGrid { bounds, cells_per_dim })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells_per_dim
    }

    pub fn len(&self) -> usize {
        self.cells_per_dim.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> Domain {
        Domain::Hypercube(self.bounds.clone())
    }

    pub fn step(&self, k: usize) -> f64 {
        let (lo, hi) = self.bounds[k];
        (hi - lo) / self.cells_per_dim as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.step(k)).product()
    }

    /// Midpoints along coordinate `k`.
    pub fn axis(&self, k: usize) -> Vec<f64> {
        let (lo, _) = self.bounds[k];
        let h = self.step(k);
        (0..self.cells_per_dim).map(|i| lo + (i as f64 + 0.5) * h).collect()
    }

    /// Midpoint of cell `index`; the last coordinate varies fastest.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let d = self.dim();
        let n = self.cells_per_dim;
        let mut out = vec![0.0; d];
        let mut rem = index;
        for k in (0..d).rev() {
            let i = rem % n;
            rem /= n;
            let (lo, _) = self.bounds[k];
            out[k] = lo + (i as f64 + 0.5) * self.step(k);
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Cell containing `x`, `None` outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let n = self.cells_per_dim;
        let mut index = 0;
        for (k, &v) in x.iter().enumerate() {
            let (lo, hi) = self.bounds[k];
            if !(v >= lo && v <= hi) {
                return None;
            }
            let i = (((v - lo) / self.step(k)) as usize).min(n - 1);
            index = index * n + i;
        }
        Some(index)
    }
}

/// Nonnegative cell values on a tensor grid; the density is constant on each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: TensorGrid,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: TensorGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("grid density values must be finite and nonnegative".into()));
        }
        Ok(GridDensity { grid, values })
    }

    /// Samples `f` at cell midpoints; negative values are an error.
    pub fn from_fn<F>(grid: TensorGrid, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values: Vec<f64> = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
        GridDensity::new(grid, values)
    }

    /// Fallible variant of `from_fn`.
    pub fn try_from_fn<F>(grid: TensorGrid, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.point(i)))
            .collect::<Result<Vec<f64>>>()?;
        GridDensity::new(grid, values)
    }

    pub fn uniform(grid: TensorGrid) -> Self {
        let v = 1.0 / grid.domain().volume();
        let n = grid.len();
        GridDensity {
            grid,
            values: vec![v; n],
        }
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Riemann mass `Σ v · cell volume`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalized(&self) -> Result<(Self, f64)> {
        let z = self.mass();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DegenerateMass { mass: z });
        }
        Ok((
            GridDensity {
                grid: self.grid.clone(),
                values: self.values.iter().map(|v| v / z).collect(),
            },
            z,
        ))
    }

    /// Piecewise-constant value at `x`; zero outside the box.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.grid.locate(x).map_or(0.0, |i| self.values[i])
    }

    /// `∫ x p(x) dx / ∫ p(x) dx` by the midpoint rule.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.grid.dim();
        let mut acc = vec![0.0; d];
        let mut z = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let p = self.grid.point(i);
            for k in 0..d {
                acc[k] += v * p[k];
            }
            z += v;
        }
        acc.into_iter().map(|a| a / z).collect()
    }

    /// Midpoint-rule covariance.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.grid.dim();
        let mean = self.mean();
        let mut acc = vec![vec![0.0; d]; d];
        let mut z = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let p = self.grid.point(i);
            for a in 0..d {
                for b in 0..d {
                    acc[a][b] += v * (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
            z += v;
        }
        for row in &mut acc {
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        acc
    }

    /// `∫ |p - q|` between two densities on the same grid.
    pub fn tv(&self, other: &GridDensity) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter("grid densities live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume())
    }

    /// Histogram of weighted samples, normalized to unit mass; samples outside the box are dropped.
    pub fn histogram(grid: TensorGrid, points: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let mut values = vec![0.0; grid.len()];
        for (p, &w) in points.iter().zip(weights) {
            if let Some(i) = grid.locate(p) {
                values[i] += w;
            }
        }
        let g = GridDensity::new(grid, values)?;
        Ok(g.normalized()?.0)
    }
}
