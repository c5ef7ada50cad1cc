//! Compression factor and relative Frobenius error.

use serde::{Deserialize, Serialize};

use crate::archive::{decompress, Archive};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// `m·n / stored_entries`.
pub fn compression_factor(m: usize, n: usize, stored_entries: usize) -> Result<f64> {
    if stored_entries == 0 {
        return Err(Error::ZeroDenominator);
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig(
            "matrix shape must be non-empty".into(),
        ));
    }
    Ok((m as f64 * n as f64) / stored_entries as f64)
}

/// `‖exact − approx‖_F / ‖exact‖_F`.
pub fn rel_frob_error(exact: &DenseMatrix, approx: &DenseMatrix) -> Result<f64> {
    let reference = exact.frobenius_norm();
    let diff = exact.sub(approx)?;
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(diff.frobenius_norm() / reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub cf: f64,
    pub rel_frob_error: f64,
    pub block_ranks: Vec<usize>,
    pub stored_entries: usize,
}

pub fn quality_report(archive: &Archive, exact: &DenseMatrix) -> Result<QualityReport> {
    let md = &archive.metadata;
    if exact.shape() != (md.m, md.n) {
        return Err(Error::DimensionMismatch(format!(
            "reference is {:?}, archive holds {}x{}",
            exact.shape(),
            md.m,
            md.n
        )));
    }
    let stored_entries = archive.stored_entries();
    Ok(QualityReport {
        cf: compression_factor(md.m, md.n, stored_entries)?,
        rel_frob_error: rel_frob_error(exact, &decompress(archive)?)?,
        block_ranks: archive.block_ranks(),
        stored_entries,
    })
}
