//! Column-pivoted QR by modified Gram-Schmidt.

use serde::{Deserialize, Serialize};

use super::dense::{dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

/// Residual norms below this fraction of the largest initial column norm
/// are treated as numerically zero.
pub const COLLAPSE_RATIO: f64 = 1e-14;

/// Columns whose norm is below this are treated as exactly zero.
pub const ZERO_COLUMN_NORM: f64 = 1e-300;

/// Stopping rule for the greedy pivoted QR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    /// Stop after exactly `k` pivots.
    FixedRank(usize),
    /// Stop once the largest residual column norm drops to
    /// `tol × (largest initial column norm)`.
    Tolerance(f64),
}

impl RankRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RankRule::FixedRank(0) => Err(Error::InvalidRankRule("fixed rank must be >= 1".into())),
            RankRule::FixedRank(_) => Ok(()),
            RankRule::Tolerance(tol) if tol > 0.0 && tol < 1.0 => Ok(()),
            RankRule::Tolerance(tol) => Err(Error::InvalidRankRule(format!(
                "tolerance {tol} outside (0, 1)"
            ))),
        }
    }
}

/// What a fixed-rank factorization does when the residual vanishes before
/// `k` pivots have been taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnCollapse {
    /// Report [`Error::RankUnreachable`].
    Fail,
    /// Stop early and return the rank reached so far.
    Truncate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrFactorization {
    /// `m × rank`, orthonormal columns.
    pub q: DenseMatrix,
    /// `rank × n`, upper trapezoidal, columns in pivot order.
    pub r_mat: DenseMatrix,
    /// `pivots[j]` is the original column placed at position `j`. The first
    /// `rank` entries are the skeleton in selection order; the rest are the
    /// unselected columns in ascending order.
    pub pivots: Vec<usize>,
    pub rank: usize,
    /// Orthogonalized residual of the unselected columns (`m × (n - rank)`,
    /// pivot order). Its norms equal those of the trailing `R₂₂` block.
    pub residual: Option<DenseMatrix>,
}

impl QrFactorization {
    pub fn skeleton_indices(&self) -> &[usize] {
        &self.pivots[..self.rank]
    }

    pub fn residual_frobenius(&self) -> f64 {
        self.residual
            .as_ref()
            .map_or(0.0, DenseMatrix::frobenius_norm)
    }
}

pub fn mgsqr(a: &DenseMatrix, rule: RankRule) -> Result<QrFactorization> {
    mgsqr_with(a, rule, OnCollapse::Fail)
}

pub fn mgsqr_with(
    a: &DenseMatrix,
    rule: RankRule,
    on_collapse: OnCollapse,
) -> Result<QrFactorization> {
    rule.validate()?;
    a.ensure_finite()?;
    let (m, n) = a.shape();
    let max_steps = m.min(n);
    if let RankRule::FixedRank(k) = rule {
        if k > max_steps {
            return Err(Error::InvalidRankRule(format!(
                "rank {k} exceeds min({m}, {n})"
            )));
        }
    }

    let mut work: Vec<Vec<f64>> = a.columns().map(<[f64]>::to_vec).collect();
    let max_initial = work.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    if max_initial < ZERO_COLUMN_NORM {
        return Err(Error::ZeroMatrix);
    }
    let collapse_floor = COLLAPSE_RATIO * max_initial;

    let mut active = vec![true; n];
    let mut selected = Vec::with_capacity(max_steps);
    let mut q_cols: Vec<Vec<f64>> = Vec::with_capacity(max_steps);
    // r_rows[i][j]: row i of R indexed by original column j.
    let mut r_rows: Vec<Vec<f64>> = Vec::with_capacity(max_steps);

    let target = match rule {
        RankRule::FixedRank(k) => k,
        RankRule::Tolerance(_) => max_steps,
    };

    for step in 0..target {
        // Strict comparison in ascending column order: ties go to the lowest index.
        let mut best = usize::MAX;
        let mut best_norm = -1.0;
        for (j, col) in work.iter().enumerate() {
            if !active[j] {
                continue;
            }
            let nrm = norm2(col);
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }

        if let RankRule::Tolerance(tol) = rule {
            if best_norm <= tol * max_initial {
                break;
            }
        }
        if best_norm < collapse_floor {
            match (rule, on_collapse) {
                (RankRule::FixedRank(k), OnCollapse::Fail) => {
                    return Err(Error::RankUnreachable {
                        requested: k,
                        achieved: step,
                    })
                }
                _ => break,
            }
        }

        // Re-orthogonalize the pivot column against the basis built so far.
        let mut v = std::mem::take(&mut work[best]);
        for (qi, ri) in q_cols.iter().zip(r_rows.iter_mut()) {
            let c = dot(qi, &v);
            v.iter_mut().zip(qi).for_each(|(v, q)| *v -= c * q);
            ri[best] += c;
        }
        let diag = norm2(&v);
        if diag < collapse_floor {
            match (rule, on_collapse) {
                (RankRule::FixedRank(k), OnCollapse::Fail) => {
                    return Err(Error::RankUnreachable {
                        requested: k,
                        achieved: step,
                    })
                }
                _ => break,
            }
        }
        v.iter_mut().for_each(|x| *x /= diag);
        active[best] = false;

        let mut row = vec![0.0; n];
        row[best] = diag;
        for (j, col) in work.iter_mut().enumerate() {
            if !active[j] {
                continue;
            }
            let c1 = dot(&v, col);
            col.iter_mut().zip(&v).for_each(|(x, q)| *x -= c1 * q);
            let c2 = dot(&v, col);
            col.iter_mut().zip(&v).for_each(|(x, q)| *x -= c2 * q);
            row[j] = c1 + c2;
        }

        selected.push(best);
        q_cols.push(v);
        r_rows.push(row);
    }

    let rank = selected.len();
    if rank == 0 {
        // Only reachable through the collapse guard on a matrix that is
        // numerically zero after orthogonalization.
        return Err(Error::ZeroMatrix);
    }
    let mut pivots = selected;
    pivots.extend((0..n).filter(|&j| active[j]));

    let q = DenseMatrix::from_columns(&q_cols)?;
    let r_mat = DenseMatrix::from_fn(rank, n, |i, p| r_rows[i][pivots[p]]);
    let residual = if rank < n {
        let cols: Vec<&[f64]> = pivots[rank..].iter().map(|&j| work[j].as_slice()).collect();
        Some(DenseMatrix::from_columns(&cols)?)
    } else {
        None
    };

    Ok(QrFactorization {
        q,
        r_mat,
        pivots,
        rank,
        residual,
    })
}

/// Solves `r11 · X = rhs` for upper-triangular `r11` by back-substitution.
pub fn solve_upper_triangular(r11: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    let (k, kc) = r11.shape();
    if k != kc {
        return Err(Error::NotSquare { rows: k, cols: kc });
    }
    if rhs.rows() != k {
        return Err(Error::DimensionMismatch(format!(
            "triangular system {k}x{k} with rhs of {} rows",
            rhs.rows()
        )));
    }
    let max_diag = (0..k).map(|i| r11[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..k {
        let d = r11[(i, i)].abs();
        if d == 0.0 || d < COLLAPSE_RATIO * max_diag {
            return Err(Error::SingularPivot { index: i });
        }
    }

    let mut x = rhs.clone();
    for c in 0..x.cols() {
        let col = x.col_mut(c);
        for i in (0..k).rev() {
            let mut s = col[i];
            for j in i + 1..k {
                s -= r11[(i, j)] * col[j];
            }
            col[i] = s / r11[(i, i)];
        }
    }
    Ok(x)
}
