use serde::{Deserialize, Serialize};

use super::grid::{flat_index, for_each_index, GridGeom};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// How coarse rows are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Every `strides[a]`-th point along axis `a` of a structured grid.
    /// `include_boundary` forces the last index of each non-periodic axis
    /// into the coarse set.
    Strided {
        strides: Vec<usize>,
        include_boundary: bool,
    },
    /// An explicit, strictly increasing row list (unstructured grids).
    Explicit { rows: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SubsampleRecipe {
    geom: GridGeom,
    selection: Selection,
}

/// Row selection `J` defining the sketch `B = A(J, :)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubsampleRecipe", into = "SubsampleRecipe")]
pub struct SubsampleSpec {
    geom: GridGeom,
    selection: Selection,
    rows: Vec<usize>,
    /// Per-axis coarse indices (structured selections only).
    axis_indices: Vec<Vec<usize>>,
}

impl SubsampleSpec {
    pub fn strided(geom: GridGeom, strides: Vec<usize>, include_boundary: bool) -> Result<Self> {
        let GridGeom::Structured { dims, periodic } = &geom else {
            return Err(Error::InvalidGeometry(
                "strided selection needs a structured grid".into(),
            ));
        };
        if strides.len() != dims.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} strides for {} axes",
                strides.len(),
                dims.len()
            )));
        }
        if strides.contains(&0) {
            return Err(Error::InvalidGeometry("strides must be >= 1".into()));
        }
        let axis_indices: Vec<Vec<usize>> = dims
            .iter()
            .zip(&strides)
            .zip(periodic)
            .map(|((&d, &s), &p)| {
                let mut idx: Vec<usize> = (0..d).step_by(s).collect();
                if include_boundary && !p && *idx.last().unwrap() != d - 1 {
                    idx.push(d - 1);
                }
                idx
            })
            .collect();
        let coarse_dims: Vec<usize> = axis_indices.iter().map(Vec::len).collect();
        let mut rows = Vec::with_capacity(coarse_dims.iter().product());
        for_each_index(&coarse_dims, |c| {
            let fine: Vec<usize> = c.iter().zip(&axis_indices).map(|(&a, ix)| ix[a]).collect();
            rows.push(flat_index(dims, &fine));
        });
        let selection = Selection::Strided {
            strides,
            include_boundary,
        };
        Ok(Self {
            geom,
            selection,
            rows,
            axis_indices,
        })
    }

    pub fn explicit(geom: GridGeom, rows: Vec<usize>) -> Result<Self> {
        if geom.is_structured() {
            return Err(Error::InvalidGeometry(
                "explicit row lists are for unstructured grids; use a strided selection".into(),
            ));
        }
        if rows.is_empty() {
            return Err(Error::EmptySketch);
        }
        if rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGeometry(
                "explicit rows must be strictly increasing".into(),
            ));
        }
        let m = geom.num_points();
        if let Some(&last) = rows.last() {
            if last >= m {
                return Err(Error::InvalidGeometry(format!("row {last} >= {m}")));
            }
        }
        let selection = Selection::Explicit { rows: rows.clone() };
        Ok(Self {
            geom,
            selection,
            rows,
            axis_indices: Vec::new(),
        })
    }

    /// The selection that keeps every row.
    pub fn all_rows(geom: GridGeom) -> Result<Self> {
        match &geom {
            GridGeom::Structured { dims, .. } => {
                let strides = vec![1; dims.len()];
                Self::strided(geom, strides, true)
            }
            GridGeom::Unstructured { points } => {
                let rows = (0..points.len()).collect();
                Self::explicit(geom, rows)
            }
        }
    }

    pub fn geom(&self) -> &GridGeom {
        &self.geom
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    /// The coarse row set `J`, strictly increasing.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn fine_rows(&self) -> usize {
        self.geom.num_points()
    }

    pub fn coarse_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_identity(&self) -> bool {
        self.rows.len() == self.geom.num_points()
    }

    pub(crate) fn axis_indices(&self) -> &[Vec<usize>] {
        &self.axis_indices
    }

    pub fn subsample(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.geom.check_rows(a.rows())?;
        a.select_rows(&self.rows)
    }

    pub fn subsample_column(&self, column: &[f64]) -> Result<Vec<f64>> {
        self.geom.check_rows(column.len())?;
        Ok(self.rows.iter().map(|&r| column[r]).collect())
    }

    /// Appends the coarse rows of `column` to `out` without allocating.
    pub(crate) fn subsample_into(&self, column: &[f64], out: &mut Vec<f64>) -> Result<()> {
        self.geom.check_rows(column.len())?;
        out.extend(self.rows.iter().map(|&r| column[r]));
        Ok(())
    }
}

impl TryFrom<SubsampleRecipe> for SubsampleSpec {
    type Error = Error;

    fn try_from(r: SubsampleRecipe) -> Result<Self> {
        match r.selection {
            Selection::Strided {
                strides,
                include_boundary,
            } => Self::strided(r.geom, strides, include_boundary),
            Selection::Explicit { rows } => Self::explicit(r.geom, rows),
        }
    }
}

impl From<SubsampleSpec> for SubsampleRecipe {
    fn from(s: SubsampleSpec) -> Self {
        SubsampleRecipe {
            geom: s.geom,
            selection: s.selection,
        }
    }
}

/// Free-function form of [`SubsampleSpec::subsample`].
pub fn subsample(a: &DenseMatrix, spec: &SubsampleSpec) -> Result<DenseMatrix> {
    spec.subsample(a)
}
