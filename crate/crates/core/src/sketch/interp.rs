//! Interpolation from the coarse grid back to the fine grid.

use serde::{Deserialize, Serialize};

use super::grid::{flat_index, for_each_index, GridGeom};
use super::subsample::SubsampleSpec;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Linear,
    Bilinear,
    Trilinear,
}

impl Scheme {
    pub(crate) fn for_axes(n: usize) -> Self {
        match n {
            1 => Scheme::Linear,
            2 => Scheme::Bilinear,
            _ => Scheme::Trilinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterpForm {
    /// Tensor-product multilinear weights rebuilt from the subsample recipe.
    StridedMultilinear { spec: SubsampleSpec, scheme: Scheme },
    /// User-supplied `(row, col, weight)` entries.
    ExplicitSparse {
        triplets: Vec<(usize, usize, f64)>,
        rows: usize,
        cols: usize,
    },
}

/// The operator `M` with `A ≈ M B`, stored row-compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpOperator {
    form: InterpForm,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
    fine_rows: usize,
    coarse_rows: usize,
    stencil_size: usize,
}

impl InterpOperator {
    pub fn form(&self) -> &InterpForm {
        &self.form
    }

    pub fn fine_rows(&self) -> usize {
        self.fine_rows
    }

    pub fn coarse_rows(&self) -> usize {
        self.coarse_rows
    }

    /// Maximum number of coarse points contributing to one fine point.
    pub fn stencil_size(&self) -> usize {
        self.stencil_size
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn is_identity(&self) -> bool {
        self.fine_rows == self.coarse_rows
            && (0..self.fine_rows).all(|i| {
                let mut r = self.row(i);
                matches!((r.next(), r.next()), (Some((c, w)), None) if c == i && w == 1.0)
            })
    }

    /// Builds an operator from explicit triplets; each row must be a convex
    /// combination of coarse points.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidOperator("empty operator".into()));
        }
        for &(r, c, w) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidOperator(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidOperator(format!("weight {w} at ({r}, {c})")));
            }
        }
        let original = triplets.clone();
        triplets.sort_by_key(|t| (t.0, t.1));
        if triplets
            .windows(2)
            .any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::InvalidOperator("duplicate entries".into()));
        }
        let stencils = (0..rows)
            .map(|_| Vec::new())
            .collect::<Vec<Vec<(usize, f64)>>>();
        let stencils = triplets.iter().fold(stencils, |mut acc, &(r, c, w)| {
            acc[r].push((c, w));
            acc
        });
        let form = InterpForm::ExplicitSparse {
            triplets: original,
            rows,
            cols,
        };
        Self::from_stencils(form, stencils, cols)
    }

    fn from_stencils(
        form: InterpForm,
        stencils: Vec<Vec<(usize, f64)>>,
        coarse_rows: usize,
    ) -> Result<Self> {
        let fine_rows = stencils.len();
        let mut row_ptr = Vec::with_capacity(fine_rows + 1);
        let mut col_idx = Vec::new();
        let mut weights = Vec::new();
        let mut stencil_size = 0;
        row_ptr.push(0);
        for (i, s) in stencils.iter().enumerate() {
            let sum: f64 = s.iter().map(|&(_, w)| w).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidOperator(format!(
                    "row {i} weights sum to {sum}"
                )));
            }
            stencil_size = stencil_size.max(s.len());
            for &(c, w) in s {
                col_idx.push(c);
                weights.push(w);
            }
            row_ptr.push(col_idx.len());
        }
        if let InterpForm::StridedMultilinear { spec, .. } = &form {
            stencil_size = 1 << spec.geom().axis_count();
        }
        Ok(Self {
            form,
            row_ptr,
            col_idx,
            weights,
            fine_rows,
            coarse_rows,
            stencil_size,
        })
    }

    pub fn apply_column(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        if coarse.len() != self.coarse_rows {
            return Err(Error::DimensionMismatch(format!(
                "interpolator expects {} coarse rows, got {}",
                self.coarse_rows,
                coarse.len()
            )));
        }
        Ok((0..self.fine_rows)
            .map(|i| self.row(i).map(|(c, w)| w * coarse[c]).sum())
            .collect())
    }

    pub fn apply(&self, coarse: &DenseMatrix) -> Result<DenseMatrix> {
        let cols = coarse
            .columns()
            .map(|c| self.apply_column(c))
            .collect::<Result<Vec<_>>>()?;
        DenseMatrix::from_columns(&cols)
    }

    /// Dense `m × m_c` form of the operator.
    pub fn materialize(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.fine_rows, self.coarse_rows);
        for i in 0..self.fine_rows {
            for (c, w) in self.row(i) {
                out[(i, c)] += w;
            }
        }
        out
    }
}

/// Per-axis weights of fine index `i` against the coarse positions `coarse`.
fn axis_weights(
    axis: usize,
    i: usize,
    len: usize,
    coarse: &[usize],
    periodic: bool,
) -> Result<Vec<(usize, f64)>> {
    match coarse.binary_search(&i) {
        Ok(pos) => Ok(vec![(pos, 1.0)]),
        Err(pos) if pos < coarse.len() => {
            let (lo, hi) = (coarse[pos - 1], coarse[pos]);
            let h = (hi - lo) as f64;
            Ok(vec![
                (pos - 1, (hi - i) as f64 / h),
                (pos, (i - lo) as f64 / h),
            ])
        }
        Err(_) if periodic => {
            // Wrap the last cell onto coarse position 0 (fine index `len`).
            let last = coarse.len() - 1;
            let lo = coarse[last];
            let hi = len + coarse[0];
            let h = (hi - lo) as f64;
            Ok(vec![(last, (hi - i) as f64 / h), (0, (i - lo) as f64 / h)])
        }
        Err(_) => Err(Error::ExtrapolationRequired { axis, index: i }),
    }
}

pub fn build_interpolator(spec: &SubsampleSpec) -> Result<InterpOperator> {
    let GridGeom::Structured { dims, periodic } = spec.geom() else {
        return Err(Error::UnstructuredNoInterp);
    };
    let axis_idx = spec.axis_indices();
    let coarse_dims: Vec<usize> = axis_idx.iter().map(Vec::len).collect();

    let per_axis: Vec<Vec<Vec<(usize, f64)>>> = dims
        .iter()
        .enumerate()
        .map(|(a, &d)| {
            (0..d)
                .map(|i| axis_weights(a, i, d, &axis_idx[a], periodic[a]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut stencils = Vec::with_capacity(spec.fine_rows());
    for_each_index(dims, |fine| {
        // Tensor product of the per-axis weight lists.
        let mut acc: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        for (a, &i) in fine.iter().enumerate() {
            acc = acc
                .into_iter()
                .flat_map(|(pos, w)| {
                    per_axis[a][i].iter().map(move |&(p, wa)| {
                        let mut pos = pos.clone();
                        pos.push(p);
                        (pos, w * wa)
                    })
                })
                .collect();
        }
        let stencil = acc
            .into_iter()
            .filter(|&(_, w)| w != 0.0)
            .map(|(pos, w)| (flat_index(&coarse_dims, &pos), w))
            .collect();
        stencils.push(stencil);
    });

    let form = InterpForm::StridedMultilinear {
        spec: spec.clone(),
        scheme: Scheme::for_axes(dims.len()),
    };
    InterpOperator::from_stencils(form, stencils, spec.coarse_rows())
}

/// Parses the `row col weight` text form (0-based, one triple per line).
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_triplets(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, line)| {
            let bad = || Error::InvalidOperator(format!("line {}: {line:?}", n + 1));
            let mut it = line.split_whitespace();
            let r = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let c = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let w = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            Ok((r, c, w))
        })
        .collect()
}

pub fn format_triplets(triplets: &[(usize, usize, f64)]) -> String {
    triplets
        .iter()
        .map(|(r, c, w)| format!("{r} {c} {w:?}\n"))
        .collect()
}
