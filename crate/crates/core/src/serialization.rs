//! JSON model files.
//!
//! Gaussian PSD model:
//!
//! ```text
//! { "kind": "gaussian_psd", "order": M, "dim": d, "groups": [["u", 1], ["x", 1]],
//!   "precision": [η_1, ..], "anchors": [row-major M × d], "weights": [row-major M × M],
//!   "log_scale": s }
//! ```
//!
//! Generalized model: same header with `"kind": "generalized_psd"`, `weights`, a `regularized`
//! flag and `"entries": [{ "i", "j", "C", "P": [row-major d × d], "center": [..] }, ..]` holding all
//! `M²` entries. Floats are written in shortest round-trip form, so reading a file back
//! reproduces every finite value bit for bit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::VariableGroups;
use crate::error::{Error, Result};
use crate::generalized::{Component, GeneralizedPsdModel};
use crate::psd::GaussianPsdModel;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Psd(GaussianPsdModel),
    Generalized(GeneralizedPsdModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Wire {
    GaussianPsd {
        order: usize,
        dim: usize,
        groups: VariableGroups,
        precision: Vec<f64>,
        anchors: Vec<f64>,
        weights: Vec<f64>,
        log_scale: f64,
    },
    GeneralizedPsd {
        order: usize,
        dim: usize,
        groups: VariableGroups,
        weights: Vec<f64>,
        regularized: bool,
        entries: Vec<WireEntry>,
    },
}

#[derive(Serialize, Deserialize)]
struct WireEntry {
    i: usize,
    j: usize,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "P")]
    p: Vec<f64>,
    center: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Serialization("model contains non-finite values".into()))
    }
}

fn matrix(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Serialization(format!(
            "{what}: expected {} values, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        let wire = match self {
            Model::Psd(m) => {
                let w = Wire::GaussianPsd {
                    order: m.order(),
                    dim: m.dim(),
                    groups: m.groups().clone(),
                    precision: m.precision().iter().copied().collect(),
                    anchors: row_major(m.anchors()),
                    weights: row_major(m.weights()),
                    log_scale: m.log_scale(),
                };
                if let Wire::GaussianPsd { precision, anchors, weights, log_scale, .. } = &w {
                    check_finite(precision)?;
                    check_finite(anchors)?;
                    check_finite(weights)?;
                    check_finite(&[*log_scale])?;
                }
                w
            }
            Model::Generalized(m) => {
                let n = m.order();
                let mut entries = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let e = m.entry(i, j);
                        let p = row_major(&e.precision);
                        let center: Vec<f64> = e.center.iter().copied().collect();
                        check_finite(&p)?;
                        check_finite(&center)?;
                        check_finite(&[e.log_scale])?;
                        entries.push(WireEntry {
                            i,
                            j,
                            c: e.log_scale,
                            p,
                            center,
                        });
                    }
                }
                let weights = row_major(m.weights());
                check_finite(&weights)?;
                Wire::GeneralizedPsd {
                    order: n,
                    dim: m.dim(),
                    groups: m.groups().clone(),
                    weights,
                    regularized: m.regularized(),
                    entries,
                }
            }
        };
        serde_json::to_string_pretty(&wire).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: Wire = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        match wire {
            Wire::GaussianPsd {
                order,
                dim,
                groups,
                precision,
                anchors,
                weights,
                log_scale,
            } => {
                if precision.len() != dim {
                    return Err(Error::Serialization(format!(
                        "precision: expected {dim} values, got {}",
                        precision.len()
                    )));
                }
                let model = GaussianPsdModel::new(
                    matrix(order, dim, &anchors, "anchors")?,
                    DVector::from_vec(precision),
                    matrix(order, order, &weights, "weights")?,
                    groups,
                )?
                .with_log_scale(log_scale);
                Ok(Model::Psd(model))
            }
            Wire::GeneralizedPsd {
                order,
                dim,
                groups,
                weights,
                regularized,
                entries,
            } => {
                let mut slots: Vec<Option<Component>> = vec![None; order * order];
                for e in entries {
                    if e.i >= order || e.j >= order {
                        return Err(Error::Serialization(format!("entry ({}, {}) out of range", e.i, e.j)));
                    }
                    if e.center.len() != dim {
                        return Err(Error::Serialization("entry center has the wrong dimension".into()));
                    }
                    let p = matrix(dim, dim, &e.p, "entry precision")?;
                    slots[e.i * order + e.j] = Some(Component {
                        log_scale: e.c,
                        precision: p,
                        center: DVector::from_vec(e.center),
                    });
                }
                let comps = slots
                    .into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::Serialization("missing generalized entries".into()))?;
                let model = GeneralizedPsdModel::new(matrix(order, order, &weights, "weights")?, comps, groups)?
                    .with_regularized(regularized);
                Ok(Model::Generalized(model))
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        Model::from_json(&text)
    }

    pub fn into_psd(self) -> Result<GaussianPsdModel> {
        match self {
            Model::Psd(m) => Ok(m),
            Model::Generalized(_) => Err(Error::Serialization("expected a Gaussian PSD model".into())),
        }
    }

    pub fn into_generalized(self) -> Result<GeneralizedPsdModel> {
        match self {
            Model::Generalized(m) => Ok(m),
            Model::Psd(_) => Err(Error::Serialization("expected a generalized PSD model".into())),
        }
    }
}
