use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial layout of the rows of a snapshot matrix.
///
/// Structured grids flatten with the first axis varying fastest: the point
/// `(i0, i1, i2)` is row `i0 + d0 * (i1 + d1 * i2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridGeom {
    Structured {
        dims: Vec<usize>,
        periodic: Vec<bool>,
    },
    Unstructured {
        points: Vec<Vec<f64>>,
    },
}

impl GridGeom {
    pub fn structured(dims: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidGeometry(format!(
                "every axis needs at least 2 points, got {dims:?}"
            )));
        }
        Self::structured_relaxed(dims, periodic)
    }

    /// Like [`GridGeom::structured`] but accepts single-point axes, which
    /// appear when a grid is partitioned finely.
    pub(crate) fn structured_relaxed(dims: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidGeometry(format!(
                "structured grids have 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidGeometry(format!("empty axis in {dims:?}")));
        }
        if periodic.len() != dims.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} periodic flags for {} axes",
                periodic.len(),
                dims.len()
            )));
        }
        Ok(GridGeom::Structured { dims, periodic })
    }

    pub fn unstructured(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidGeometry("no points".into()))?;
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidGeometry(
                "inconsistent point dimension".into(),
            ));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(GridGeom::Unstructured { points })
    }

    pub fn num_points(&self) -> usize {
        match self {
            GridGeom::Structured { dims, .. } => dims.iter().product(),
            GridGeom::Unstructured { points } => points.len(),
        }
    }

    pub fn axis_count(&self) -> usize {
        match self {
            GridGeom::Structured { dims, .. } => dims.len(),
            GridGeom::Unstructured { points } => points[0].len(),
        }
    }

    pub fn is_structured(&self) -> bool {
        matches!(self, GridGeom::Structured { .. })
    }

    pub fn dims(&self) -> Option<&[usize]> {
        match self {
            GridGeom::Structured { dims, .. } => Some(dims),
            GridGeom::Unstructured { .. } => None,
        }
    }

    pub fn check_rows(&self, rows: usize) -> Result<()> {
        let points = self.num_points();
        if rows == points {
            Ok(())
        } else {
            Err(Error::GeometryMismatch { rows, points })
        }
    }
}

pub(crate) fn flat_index(dims: &[usize], idx: &[usize]) -> usize {
    idx.iter()
        .zip(dims)
        .rev()
        .fold(0, |acc, (&i, &d)| acc * d + i)
}

pub(crate) fn multi_index(dims: &[usize], mut flat: usize) -> Vec<usize> {
    dims.iter()
        .map(|&d| {
            let i = flat % d;
            flat /= d;
            i
        })
        .collect()
}

/// Visits every multi-index of `dims` in flat order (first axis fastest).
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = dims.iter().product();
    let mut idx = vec![0; dims.len()];
    for _ in 0..total {
        f(&idx);
        for (i, &d) in idx.iter_mut().zip(dims) {
            *i += 1;
            if *i < d {
                break;
            }
            *i = 0;
        }
    }
}
