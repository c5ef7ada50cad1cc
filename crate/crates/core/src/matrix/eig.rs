//! Cyclic Jacobi eigensolver for small symmetric matrices, and the norms
//! built on it.

use serde::{Deserialize, Serialize};

use super::dense::{norm2, DenseMatrix};
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 64;

/// All eigenvalues of a symmetric matrix, sorted in descending order.
pub fn sym_eigenvalues(s: &DenseMatrix) -> Result<Vec<f64>> {
    let (n, nc) = s.shape();
    if n != nc {
        return Err(Error::NotSquare { rows: n, cols: nc });
    }
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    let total = s.frobenius_norm();
    if total == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let asym = s.sub(&s.transpose())?.frobenius_norm() / total;
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    // Row-major working copy of the symmetrized matrix.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (s[(i, j)] + s[(j, i)]);
        }
    }
    let off = |a: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[i * n + j] * a[i * n + j];
                }
            }
        }
        acc.sqrt()
    };

    let target = OFF_DIAGONAL_TOL * total;
    for _ in 0..MAX_SWEEPS {
        if off(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_eig_max(s: &DenseMatrix) -> Result<f64> {
    Ok(sym_eigenvalues(s)?[0])
}

/// Singular values in descending order by one-sided Jacobi rotations, which
/// keeps small singular values accurate to roughly `ε·σ₁` absolute.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    let work = if a.rows() < a.cols() {
        a.transpose()
    } else {
        a.clone()
    };
    let (m, n) = work.shape();
    let mut cols: Vec<Vec<f64>> = work.columns().map(<[f64]>::to_vec).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = (0..m).fold((0.0, 0.0, 0.0), |(a, b, g), i| {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    (a + x * x, b + y * y, g + x * y)
                });
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xv, yv) = (*x, *y);
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub frobenius: f64,
    pub spectral: f64,
}

pub fn norms(a: &DenseMatrix) -> Norms {
    Norms {
        frobenius: a.frobenius_norm(),
        spectral: spectral_norm(a),
    }
}

/// Largest singular value via the eigenvalues of the smaller Gram matrix.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    let gram = if a.rows() < a.cols() {
        a.transpose().gram()
    } else {
        a.gram()
    };
    sym_eig_max(&gram)
        .expect("Gram matrix is square and symmetric")
        .max(0.0)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
    }

    #[test]
    fn diagonal_and_two_by_two() {
        assert_eq!(sym_eig_max(&diag(&[3.0, 1.0, -2.0])).unwrap(), 3.0);
        let s = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        assert!((sym_eig_max(&s).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(sym_eig_max(&DenseMatrix::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            sym_eig_max(&DenseMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let s = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig_max(&s), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn tiny_asymmetry_is_tolerated() {
        let s = DenseMatrix::from_rows(&[&[2.0, 1.0 + 1e-13], &[1.0, 2.0]]).unwrap();
        assert!((sym_eig_max(&s).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn norms_identity_and_zero() {
        let n = norms(&DenseMatrix::identity(3));
        assert!((n.frobenius - 3f64.sqrt()).abs() < 1e-15);
        assert!((n.spectral - 1.0).abs() < 1e-14);
        let z = norms(&DenseMatrix::zeros(2, 5));
        assert_eq!((z.frobenius, z.spectral), (0.0, 0.0));
    }

    #[test]
    fn small_singular_values_are_resolved() {
        let a = DenseMatrix::from_fn(5, 3, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (1, 1) => 1e-9,
            (2, 2) => 1e-12,
            _ => 0.0,
        });
        let sv = singular_values(&a);
        assert!((sv[1] - 1e-9).abs() < 1e-22 && (sv[2] - 1e-12).abs() < 1e-25);
        assert_eq!(singular_values(&a.transpose()), sv);
    }

    #[test]
    fn rank_one_spectral_norm() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, 1.1, -0.7];
        let a = DenseMatrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let expect = super::super::dense::norm2(&u) * super::super::dense::norm2(&v);
        assert!((spectral_norm(&a) - expect).abs() < 1e-12 * expect);
        assert!((spectral_norm(&a.transpose()) - expect).abs() < 1e-12 * expect);
    }
}
