use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integration domain: either all of space or an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Whole,
    Hypercube(Vec<(f64, f64)>),
}

impl Domain {
    /// The open cube `(-1, 1)^dim`.
    pub fn unit_cube(dim: usize) -> Self {
        Domain::Hypercube(vec![(-1.0, 1.0); dim])
    }

    pub fn hypercube(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "hypercube bounds for dimension {k} must satisfy lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Domain::Hypercube(bounds))
    }

    pub fn is_whole(&self) -> bool {
        matches!(self, Domain::Whole)
    }

    /// Bounds of coordinate `k`, `None` when unbounded.
    pub fn bounds(&self, k: usize) -> Option<(f64, f64)> {
        match self {
            Domain::Whole => None,
            Domain::Hypercube(b) => b.get(k).copied(),
        }
    }

    /// Checks that a hypercube has exactly `dim` coordinates. Whole space fits any dimension.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Domain::Whole => Ok(()),
            Domain::Hypercube(b) if b.len() == dim => Ok(()),
            Domain::Hypercube(b) => Err(Error::DimensionMismatch {
                expected: dim,
                got: b.len(),
            }),
        }
    }

    /// Sub-domain covering coordinates `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Domain {
        match self {
            Domain::Whole => Domain::Whole,
            Domain::Hypercube(b) => Domain::Hypercube(b[start..start + len].to_vec()),
        }
    }

    /// Cartesian product of two domains; whole space absorbs boxes.
    pub fn product(&self, other: &Domain) -> Domain {
        match (self, other) {
            (Domain::Hypercube(a), Domain::Hypercube(b)) => {
                Domain::Hypercube(a.iter().chain(b.iter()).copied().collect())
            }
            _ => Domain::Whole,
        }
    }

    pub fn box_bounds(&self) -> Result<&[(f64, f64)]> {
        match self {
            Domain::Hypercube(b) => Ok(b),
            Domain::Whole => Err(Error::InvalidParameter(
                "operation requires a bounded hypercube domain".into(),
            )),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Whole => f64::INFINITY,
            Domain::Hypercube(b) => b.iter().map(|(lo, hi)| hi - lo).product(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Whole => true,
            Domain::Hypercube(b) => x
                .iter()
                .zip(b)
                .all(|(&v, &(lo, hi))| v > lo && v < hi),
        }
    }
}

/// Ordered partition of model coordinates into named blocks, e.g. `[("u", 1), ("x", 1)]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableGroups(Vec<(String, usize)>);

impl VariableGroups {
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let groups: Vec<(String, usize)> = groups.into_iter().map(|(n, d)| (n.into(), d)).collect();
        for (i, (name, _)) in groups.iter().enumerate() {
            if groups[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::IncompatibleGroups(format!("duplicate group `{name}`")));
            }
        }
        Ok(VariableGroups(groups))
    }

    pub fn single(name: &str, dim: usize) -> Self {
        VariableGroups(vec![(name.to_string(), dim)])
    }

    pub fn dim(&self) -> usize {
        self.0.iter().map(|(_, d)| d).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(n, d)| (n.as_str(), *d))
    }

    pub fn names(&self) -> Vec<&str> {
        self.0.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|(n, _)| n == name)
    }

    /// Coordinate range of group `name`.
    pub fn range(&self, name: &str) -> Result<std::ops::Range<usize>> {
        let mut offset = 0;
        for (n, d) in &self.0 {
            if n == name {
                return Ok(offset..offset + d);
            }
            offset += d;
        }
        Err(Error::UnknownGroup(name.to_string()))
    }

    pub fn group_dim(&self, name: &str) -> Result<usize> {
        self.range(name).map(|r| r.len())
    }

    pub fn without(&self, name: &str) -> Result<Self> {
        if !self.contains(name) {
            return Err(Error::UnknownGroup(name.to_string()));
        }
        Ok(VariableGroups(
            self.0.iter().filter(|(n, _)| n != name).cloned().collect(),
        ))
    }

    pub fn renamed(&self, from: &str, to: &str) -> Result<Self> {
        if !self.contains(from) {
            return Err(Error::UnknownGroup(from.to_string()));
        }
        if from != to && self.contains(to) {
            return Err(Error::IncompatibleGroups(format!("group `{to}` already exists")));
        }
        Ok(VariableGroups(
            self.0
                .iter()
                .map(|(n, d)| (if n == from { to.to_string() } else { n.clone() }, *d))
                .collect(),
        ))
    }

    /// Union keeping `self`'s order, then `other`'s new groups. Shared names must agree in dimension.
    pub fn union(&self, other: &Self) -> Result<Self> {
        let mut out = self.0.clone();
        for (name, d) in &other.0 {
            match self.0.iter().find(|(n, _)| n == name) {
                Some((_, d0)) if d0 != d => {
                    return Err(Error::IncompatibleGroups(format!(
                        "group `{name}` has dimension {d0} in one model and {d} in the other"
                    )))
                }
                Some(_) => {}
                None => out.push((name.clone(), *d)),
            }
        }
        Ok(VariableGroups(out))
    }

    /// For every coordinate of `self`, the matching coordinate in `other`, if the group is shared.
    pub(crate) fn coordinate_map(&self, other: &Self) -> Vec<Option<usize>> {
        let mut map = Vec::with_capacity(self.dim());
        for (name, d) in &self.0 {
            let r = other.range(name).ok();
            for k in 0..*d {
                map.push(r.as_ref().map(|r| r.start + k));
            }
        }
        map
    }
}
