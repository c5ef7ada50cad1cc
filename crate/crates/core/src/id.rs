//! Column interpolative decompositions: plain ID, subsampled ID (SubID) and
//! single-pass ID (SPID), plus reconstruction.

use crate::error::{Error, Result};
use crate::matrix::{
    mgsqr_with, solve_upper_triangular, DenseMatrix, OnCollapse, QrFactorization, RankRule,
};
use crate::sketch::{build_interpolator, InterpOperator, SubsampleSpec};

/// `A ≈ skeleton · coeffs` with `skeleton = A(:, I)` (or the coarse
/// `B(:, I)` for SPID).
#[derive(Debug, Clone, PartialEq)]
pub struct IdFactors {
    skeleton_indices: Vec<usize>,
    coeffs: DenseMatrix,
    skeleton: DenseMatrix,
}

impl IdFactors {
    /// Assembles factors from parts, checking that `coeffs(:, I)` is the
    /// identity and that shapes agree.
    pub fn new(
        skeleton_indices: Vec<usize>,
        coeffs: DenseMatrix,
        skeleton: DenseMatrix,
    ) -> Result<Self> {
        let k = skeleton_indices.len();
        let n = coeffs.cols();
        if coeffs.rows() != k || skeleton.cols() != k {
            return Err(Error::DimensionMismatch(format!(
                "rank {k} with coeffs {:?} and skeleton {:?}",
                coeffs.shape(),
                skeleton.shape()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &skeleton_indices {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidMatrix(format!(
                    "skeleton index {i} out of range or repeated"
                )));
            }
        }
        coeffs.ensure_finite()?;
        skeleton.ensure_finite()?;
        let factors = Self {
            skeleton_indices,
            coeffs,
            skeleton,
        };
        if !factors.has_identity_block() {
            return Err(Error::LemmaViolation(
                "coeffs(:, I) is not the identity".into(),
            ));
        }
        Ok(factors)
    }

    pub fn skeleton_indices(&self) -> &[usize] {
        &self.skeleton_indices
    }

    pub fn coeffs(&self) -> &DenseMatrix {
        &self.coeffs
    }

    pub fn skeleton(&self) -> &DenseMatrix {
        &self.skeleton
    }

    pub fn achieved_rank(&self) -> usize {
        self.skeleton_indices.len()
    }

    pub fn source_cols(&self) -> usize {
        self.coeffs.cols()
    }

    /// `coeffs(:, I)` equals the `k × k` identity exactly.
    pub fn has_identity_block(&self) -> bool {
        self.skeleton_indices.iter().enumerate().all(|(p, &j)| {
            self.coeffs
                .col(j)
                .iter()
                .enumerate()
                .all(|(r, &v)| v == if r == p { 1.0 } else { 0.0 })
        })
    }

    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.skeleton.matmul(&self.coeffs)
    }

    /// Replaces the skeleton columns, e.g. with the fine-grid columns at `I`.
    pub(crate) fn with_skeleton(mut self, skeleton: DenseMatrix) -> Result<Self> {
        if skeleton.cols() != self.achieved_rank() {
            return Err(Error::DimensionMismatch("skeleton rank changed".into()));
        }
        self.skeleton = skeleton;
        Ok(self)
    }

    pub fn into_parts(self) -> (Vec<usize>, DenseMatrix, DenseMatrix) {
        (self.skeleton_indices, self.coeffs, self.skeleton)
    }
}

/// Coefficients `C = [I_k | R₁₁⁻¹ R₁₂] Zᵀ` from a pivoted QR of an `n`-column matrix.
pub(crate) fn coefficients_from_qr(qr: &QrFactorization) -> Result<DenseMatrix> {
    let k = qr.rank;
    let n = qr.pivots.len();
    let mut c = DenseMatrix::zeros(k, n);
    for (p, &j) in qr.pivots[..k].iter().enumerate() {
        c[(p, j)] = 1.0;
    }
    if k < n {
        let r11 = DenseMatrix::from_fn(k, k, |i, j| qr.r_mat[(i, j)]);
        let r12 = DenseMatrix::from_fn(k, n - k, |i, j| qr.r_mat[(i, k + j)]);
        let t = solve_upper_triangular(&r11, &r12)?;
        for (p, &j) in qr.pivots[k..].iter().enumerate() {
            c.col_mut(j).copy_from_slice(t.col(p));
        }
    }
    Ok(c)
}

pub fn column_id(a: &DenseMatrix, rule: RankRule) -> Result<IdFactors> {
    column_id_with(a, rule, OnCollapse::Fail)
}

/// Column ID with explicit control over what a fixed rank does when the
/// input turns out to have lower numerical rank.
pub fn column_id_with(
    a: &DenseMatrix,
    rule: RankRule,
    on_collapse: OnCollapse,
) -> Result<IdFactors> {
    let qr = mgsqr_with(a, rule, on_collapse)?;
    let coeffs = coefficients_from_qr(&qr)?;
    let indices = qr.skeleton_indices().to_vec();
    let skeleton = a.select_columns(&indices)?;
    let factors = IdFactors::new(indices, coeffs, skeleton)?;
    debug_assert!(
        factors.achieved_rank() < a.rows().min(a.cols()) || {
            let err = a.sub(&factors.reconstruct()?)?.frobenius_norm();
            err <= 1e-10 * a.frobenius_norm()
        },
        "full-rank ID is not exact"
    );
    Ok(factors)
}

/// Two-pass subsampled ID: indices and coefficients from the sketch
/// `B = A(J, :)`, skeleton re-read from the fine-grid matrix.
pub fn sub_id(a: &DenseMatrix, spec: &SubsampleSpec, rule: RankRule) -> Result<IdFactors> {
    let b = spec.subsample(a)?;
    let sketch_id = column_id(&b, rule)?;
    let skeleton = a.select_columns(sketch_id.skeleton_indices())?;
    sketch_id.with_skeleton(skeleton)
}

/// SPID output: `A ≈ M · B(:, I_B) · C_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpidFactors {
    base: IdFactors,
    interp: InterpOperator,
}

impl SpidFactors {
    pub fn new(base: IdFactors, interp: InterpOperator) -> Result<Self> {
        if base.skeleton().rows() != interp.coarse_rows() {
            return Err(Error::DimensionMismatch(format!(
                "coarse skeleton has {} rows, interpolator expects {}",
                base.skeleton().rows(),
                interp.coarse_rows()
            )));
        }
        Ok(Self { base, interp })
    }

    pub fn base(&self) -> &IdFactors {
        &self.base
    }

    pub fn interp(&self) -> &InterpOperator {
        &self.interp
    }

    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.interp
            .apply(self.base.skeleton())?
            .matmul(self.base.coeffs())
    }
}

/// Single-pass accumulator: each pushed snapshot is subsampled on arrival
/// and only the coarse rows are kept.
#[derive(Debug)]
pub struct SpidStream {
    spec: SubsampleSpec,
    interp: InterpOperator,
    coarse: Vec<f64>,
    cols: usize,
}

impl SpidStream {
    pub fn new(spec: SubsampleSpec) -> Result<Self> {
        let interp = build_interpolator(&spec)?;
        Ok(Self::with_operator(spec, interp))
    }

    /// Uses a caller-supplied operator, e.g. an explicit sparse `M` for an
    /// unstructured grid.
    pub fn with_operator(spec: SubsampleSpec, interp: InterpOperator) -> Self {
        Self {
            spec,
            interp,
            coarse: Vec::new(),
            cols: 0,
        }
    }

    pub fn push(&mut self, snapshot: &[f64]) -> Result<()> {
        if snapshot.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.spec.subsample_into(snapshot, &mut self.coarse)?;
        self.cols += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.cols == 0
    }

    /// Number of `f64` values currently retained.
    pub fn retained_values(&self) -> usize {
        self.coarse.len()
    }

    pub fn finish(self, rule: RankRule) -> Result<SpidFactors> {
        if self.cols == 0 {
            return Err(Error::ShortStream);
        }
        let b = DenseMatrix::new(self.spec.coarse_rows(), self.cols, self.coarse)?;
        let base = column_id(&b, rule)?;
        SpidFactors::new(base, self.interp)
    }
}

/// SPID over an in-memory matrix, fed column by column through [`SpidStream`].
pub fn spid(a: &DenseMatrix, spec: &SubsampleSpec, rule: RankRule) -> Result<SpidFactors> {
    spec.geom().check_rows(a.rows())?;
    let mut stream = SpidStream::new(spec.clone())?;
    for col in a.columns() {
        stream.push(col)?;
    }
    stream.finish(rule)
}

/// Anything that can be expanded back into an `m × n` matrix.
pub trait Reconstruct {
    fn reconstruct(&self) -> Result<DenseMatrix>;
}

impl Reconstruct for IdFactors {
    fn reconstruct(&self) -> Result<DenseMatrix> {
        IdFactors::reconstruct(self)
    }
}

impl Reconstruct for SpidFactors {
    fn reconstruct(&self) -> Result<DenseMatrix> {
        SpidFactors::reconstruct(self)
    }
}

pub fn reconstruct(factors: &impl Reconstruct) -> Result<DenseMatrix> {
    factors.reconstruct()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::GridGeom;

    #[test]
    fn duplicate_columns() {
        let u = [1.0, -2.0, 3.0];
        let a = DenseMatrix::from_columns(&[u, u]).unwrap();
        let f = column_id(&a, RankRule::FixedRank(1)).unwrap();
        assert_eq!(f.skeleton_indices(), &[0]);
        assert_eq!(f.coeffs().data(), &[1.0, 1.0]);
        assert_eq!(f.reconstruct().unwrap(), a);
    }

    #[test]
    fn identity_round_trip() {
        let f = column_id(&DenseMatrix::identity(2), RankRule::FixedRank(2)).unwrap();
        assert_eq!(f.reconstruct().unwrap(), DenseMatrix::identity(2));
    }

    #[test]
    fn rank_one_expansion() {
        let u = DenseMatrix::from_columns(&[[1.0, 2.0]]).unwrap();
        let c = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0]]).unwrap();
        let f = IdFactors::new(vec![0], c, u).unwrap();
        let r = f.reconstruct().unwrap();
        assert_eq!(r.data(), &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
    }

    #[test]
    fn new_rejects_inconsistent_parts() {
        let u = DenseMatrix::from_columns(&[[1.0, 2.0]]).unwrap();
        let c = DenseMatrix::from_rows(&[&[0.5, 2.0]]).unwrap();
        assert!(matches!(
            IdFactors::new(vec![0], c.clone(), u.clone()),
            Err(Error::LemmaViolation(_))
        ));
        assert!(IdFactors::new(vec![2], c.clone(), u.clone()).is_err());
        assert!(IdFactors::new(vec![0, 1], c, u).is_err());
    }

    #[test]
    fn full_rank_is_exact() {
        let a = DenseMatrix::from_fn(5, 7, |i, j| {
            ((i * 5 + j * 3) % 7) as f64 - 3.0 + 0.01 * (i * j) as f64
        });
        let f = column_id(&a, RankRule::FixedRank(5)).unwrap();
        let err = a.sub(&f.reconstruct().unwrap()).unwrap().frobenius_norm();
        assert!(err <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn stride_one_sub_id_matches_column_id() {
        let g = GridGeom::structured(vec![4, 3], vec![false, false]).unwrap();
        let spec = SubsampleSpec::all_rows(g).unwrap();
        let a = DenseMatrix::from_fn(12, 5, |i, j| ((i + 1) as f64).powi(j as i32 % 3) + j as f64);
        let rule = RankRule::FixedRank(3);
        let f = column_id(&a, rule).unwrap();
        assert_eq!(sub_id(&a, &spec, rule).unwrap(), f);
        let s = spid(&a, &spec, rule).unwrap();
        assert_eq!(s.base(), &f);
        let err = s
            .reconstruct()
            .unwrap()
            .sub(&f.reconstruct().unwrap())
            .unwrap()
            .max_abs();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn spid_rejects_unstructured_without_operator() {
        let g = GridGeom::unstructured(vec![vec![0.0], vec![1.0]]).unwrap();
        let spec = SubsampleSpec::all_rows(g).unwrap();
        let a = DenseMatrix::identity(2);
        assert!(matches!(
            spid(&a, &spec, RankRule::FixedRank(1)),
            Err(Error::UnstructuredNoInterp)
        ));
    }

    #[test]
    fn spid_stream_with_explicit_operator() {
        let g = GridGeom::unstructured(vec![vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let spec = SubsampleSpec::explicit(g, vec![0, 2]).unwrap();
        let op = InterpOperator::from_triplets(
            3,
            2,
            vec![(0, 0, 1.0), (1, 0, 0.5), (1, 1, 0.5), (2, 1, 1.0)],
        )
        .unwrap();
        let mut s = SpidStream::with_operator(spec, op);
        for t in 0..4 {
            let c = 1.0 + t as f64;
            s.push(&[c, 2.0 * c, 3.0 * c]).unwrap();
        }
        assert_eq!(s.retained_values(), 8);
        let f = s.finish(RankRule::FixedRank(1)).unwrap();
        let r = f.reconstruct().unwrap();
        assert!((r[(1, 3)] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn empty_stream() {
        let g = GridGeom::structured(vec![3], vec![false]).unwrap();
        let s = SpidStream::new(SubsampleSpec::all_rows(g).unwrap()).unwrap();
        assert!(matches!(
            s.finish(RankRule::FixedRank(1)),
            Err(Error::ShortStream)
        ));
    }
}
