//! Numerical checks of the SubID and SPID error bounds and of the ID
//! coefficient properties, at desk scale.
//!
//! `ε(τ) = λ_max(AᵀA − τBᵀB)` is the smallest `ε` with
//! `‖Ax‖² ≤ τ‖Bx‖² + ε‖x‖²` for all `x`, where `B = A(J, :)`.

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::datagen::{gen_decaying_spectrum, gen_smooth_fields};
use crate::error::{Error, Result};
use crate::id::{column_id, spid, sub_id, IdFactors};
use crate::matrix::{singular_values, spectral_norm, sym_eig_max, DenseMatrix, RankRule};
use crate::sketch::{GridGeom, SubsampleSpec};

pub const DEFAULT_TAU_GRID: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const BOUND_SLACK: f64 = 1e-8;

/// `ε(τ)`, accurate relative to `|ε(τ)|` rather than to `‖AᵀA‖`.
///
/// The difference of Gram matrices is accumulated in double-double, a Jacobi
/// estimate brackets the top eigenvalue, and bisection on the definiteness of
/// `xI − (AᵀA − τBᵀB)` (double-double Cholesky) refines it.
pub fn eps_tau(a: &DenseMatrix, b: &DenseMatrix, tau: f64) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} columns, B has {}",
            a.cols(),
            b.cols()
        )));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tau {tau} must be finite and >= 0"
        )));
    }
    let s = gram_difference(a, b, tau);
    let n = a.cols();
    let rounded = DenseMatrix::from_fn(n, n, |i, j| s[i][j].hi());
    let scale = rounded.frobenius_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let estimate = sym_eig_max(&rounded)?;
    let above = |x: f64| dominates(&s, x);
    let mut width = 1e-10 * scale;
    let (mut lo, mut hi) = (estimate - width, estimate + width);
    while !above(hi) || above(lo) {
        width *= 16.0;
        (lo, hi) = (estimate - width, estimate + width);
        if width > 4.0 * scale {
            return Ok(estimate);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn gram_difference(a: &DenseMatrix, b: &DenseMatrix, tau: f64) -> Vec<Vec<TwoFloat>> {
    let n = a.cols();
    let gram = |m: &DenseMatrix, p: usize, q: usize| {
        m.col(p)
            .iter()
            .zip(m.col(q))
            .fold(TwoFloat::from(0.0), |acc, (&x, &y)| {
                acc + TwoFloat::new_mul(x, y)
            })
    };
    let mut s = vec![vec![TwoFloat::from(0.0); n]; n];
    for p in 0..n {
        for q in p..n {
            let v = gram(a, p, q) - gram(b, p, q) * tau;
            s[p][q] = v;
            s[q][p] = v;
        }
    }
    s
}

/// Whether `xI − s` is positive definite, by Cholesky in double-double.
fn dominates(s: &[Vec<TwoFloat>], x: f64) -> bool {
    let n = s.len();
    let mut l = vec![vec![TwoFloat::from(0.0); n]; n];
    for j in 0..n {
        let mut d = TwoFloat::from(x) - s[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return false;
        }
        let root = d.sqrt();
        l[j][j] = root;
        for i in j + 1..n {
            let mut v = -s[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k];
            }
            l[i][j] = v / root;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rank: usize,
    /// `‖A − Â‖₂`.
    pub actual_error_spectral: f64,
    /// `min ρ_k(τ)` over the admissible τ samples.
    pub thm1_bound: Option<f64>,
    /// `‖E_I‖₂ + ‖M‖₂‖B − B̂‖₂`.
    pub thm2_bound: Option<f64>,
    pub tau_grid: Vec<f64>,
    pub eps_tau: Vec<f64>,
    /// `ρ_k(τ)` per τ sample; `None` where `ε(τ) < 0`.
    pub rho: Vec<Option<f64>>,
    pub sigma_k: f64,
    pub sigma_k1: f64,
    /// `‖B − B̂‖₂`.
    pub sketch_error: f64,
    pub coeff_norm: f64,
    /// `‖E_I‖₂ = ‖A − M B‖₂`.
    pub interp_error: Option<f64>,
    /// `‖M‖₂` of the materialized operator.
    pub interp_norm: Option<f64>,
    pub holds: bool,
}

fn within(actual: f64, bound: f64) -> bool {
    actual <= bound * (1.0 + BOUND_SLACK)
}

fn sketch_singular_pair(b: &DenseMatrix, k: usize) -> Result<(f64, f64)> {
    let sv = singular_values(b);
    let sigma_k = sv[k - 1];
    if !(sigma_k > 0.0) {
        return Err(Error::RankExceedsSketch { rank: k });
    }
    Ok((sigma_k, sv.get(k).copied().unwrap_or(0.0)))
}

fn fixed_rank_fits(b: &DenseMatrix, rule: RankRule) -> Result<()> {
    if let RankRule::FixedRank(k) = rule {
        if k > b.rows().min(b.cols()) {
            return Err(Error::RankExceedsSketch { rank: k });
        }
    }
    Ok(())
}

/// `ρ_k(τ) = (1 + ‖C‖₂)√(τσ_{k+1}² + ε(τ)) + ‖B − B̂‖₂√(τ + ε(τ)σ_k⁻²)`.
pub fn rho_k(
    tau: f64,
    eps: f64,
    sigma_k: f64,
    sigma_k1: f64,
    coeff_norm: f64,
    sketch_error: f64,
) -> f64 {
    (1.0 + coeff_norm) * (tau * sigma_k1 * sigma_k1 + eps).sqrt()
        + sketch_error * (tau + eps / (sigma_k * sigma_k)).sqrt()
}

/// SubID bound: `‖A − Â‖₂ ≤ min_τ ρ_k(τ)` over τ samples with `ε(τ) ≥ 0`.
pub fn thm1_check(
    a: &DenseMatrix,
    spec: &SubsampleSpec,
    rule: RankRule,
    tau_grid: &[f64],
) -> Result<BoundReport> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidConfig("tau grid is empty".into()));
    }
    let b = spec.subsample(a)?;
    fixed_rank_fits(&b, rule)?;
    let factors = sub_id(a, spec, rule)?;
    let k = factors.achieved_rank();
    let (sigma_k, sigma_k1) = sketch_singular_pair(&b, k)?;

    let actual = spectral_norm(&a.sub(&factors.reconstruct()?)?);
    let b_hat = b
        .select_columns(factors.skeleton_indices())?
        .matmul(factors.coeffs())?;
    let sketch_error = spectral_norm(&b.sub(&b_hat)?);
    let coeff_norm = spectral_norm(factors.coeffs());

    let eps = tau_grid
        .iter()
        .map(|&t| eps_tau(a, &b, t))
        .collect::<Result<Vec<_>>>()?;
    let rho: Vec<Option<f64>> = tau_grid
        .iter()
        .zip(&eps)
        .map(|(&t, &e)| {
            (e >= 0.0).then(|| rho_k(t, e, sigma_k, sigma_k1, coeff_norm, sketch_error))
        })
        .collect();
    let bound = rho.iter().flatten().copied().reduce(f64::min);
    Ok(BoundReport {
        rank: k,
        actual_error_spectral: actual,
        thm1_bound: bound,
        thm2_bound: None,
        tau_grid: tau_grid.to_vec(),
        eps_tau: eps,
        rho,
        sigma_k,
        sigma_k1,
        sketch_error,
        coeff_norm,
        interp_error: None,
        interp_norm: None,
        holds: bound.is_some_and(|bd| within(actual, bd)),
    })
}

/// SPID bound: `‖A − M B̂‖₂ ≤ ‖E_I‖₂ + ‖M‖₂‖B − B̂‖₂`.
pub fn thm2_check(a: &DenseMatrix, spec: &SubsampleSpec, rule: RankRule) -> Result<BoundReport> {
    if !spec.geom().is_structured() {
        return Err(Error::UnstructuredNoInterp);
    }
    let b = spec.subsample(a)?;
    fixed_rank_fits(&b, rule)?;
    let factors = spid(a, spec, rule)?;
    let k = factors.base().achieved_rank();
    let (sigma_k, sigma_k1) = sketch_singular_pair(&b, k)?;

    let m_op = factors.interp();
    let interp_error = spectral_norm(&a.sub(&m_op.apply(&b)?)?);
    let interp_norm = spectral_norm(&m_op.materialize());
    let sketch_error = spectral_norm(&b.sub(&factors.base().reconstruct()?)?);
    let actual = spectral_norm(&a.sub(&factors.reconstruct()?)?);
    let bound = interp_error + interp_norm * sketch_error;
    Ok(BoundReport {
        rank: k,
        actual_error_spectral: actual,
        thm1_bound: None,
        thm2_bound: Some(bound),
        tau_grid: Vec::new(),
        eps_tau: Vec::new(),
        rho: Vec::new(),
        sigma_k,
        sigma_k1,
        sketch_error,
        coeff_norm: spectral_norm(factors.base().coeffs()),
        interp_error: Some(interp_error),
        interp_norm: Some(interp_norm),
        holds: within(actual, bound),
    })
}

const EXACTNESS_TOL: f64 = 1e-10;

/// Coefficient properties of one ID. `identity_block` and `exact` are hard
/// requirements; the rest are diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub rank: usize,
    pub identity_block: bool,
    /// Only evaluated when `k = n` or `k = m`.
    pub exact: Option<bool>,
    pub max_abs_coeff: f64,
    pub entries_bounded: bool,
    pub coeff_norm: f64,
    /// `√(k(n − k) + 1)`.
    pub growth_bound: f64,
    pub coeff_norm_bounded: bool,
    pub residual_spectral: f64,
    /// `σ_{k+1}(A)`, zero when `k = min(m, n)`.
    pub sigma_k1: f64,
    pub residual_bounded: bool,
}

impl LemmaReport {
    pub fn hard_pass(&self) -> bool {
        self.identity_block && self.exact != Some(false)
    }

    pub fn ensure(&self) -> Result<()> {
        if !self.identity_block {
            return Err(Error::LemmaViolation("C(:, I) is not the identity".into()));
        }
        if self.exact == Some(false) {
            return Err(Error::LemmaViolation("full-rank ID is not exact".into()));
        }
        Ok(())
    }
}

pub fn lemma_check(factors: &IdFactors, a: &DenseMatrix) -> Result<LemmaReport> {
    let (m, n) = a.shape();
    if factors.source_cols() != n || factors.skeleton().rows() != m {
        return Err(Error::DimensionMismatch(
            "factors were not produced from this matrix".into(),
        ));
    }
    let k = factors.achieved_rank();
    let c = factors.coeffs();
    let residual = a.sub(&factors.reconstruct()?)?;
    let exact =
        (k == n || k == m).then(|| residual.frobenius_norm() <= EXACTNESS_TOL * a.frobenius_norm());
    let max_abs_coeff = c.max_abs();
    let coeff_norm = spectral_norm(c);
    let growth_bound = ((k * (n - k) + 1) as f64).sqrt();
    let residual_spectral = spectral_norm(&residual);
    let sigma_k1 = singular_values(a).get(k).copied().unwrap_or(0.0);
    let slack = 1.0 + BOUND_SLACK;
    Ok(LemmaReport {
        rank: k,
        identity_block: factors.has_identity_block(),
        exact,
        max_abs_coeff,
        entries_bounded: max_abs_coeff <= slack,
        coeff_norm,
        growth_bound,
        coeff_norm_bounded: coeff_norm <= growth_bound * slack,
        residual_spectral,
        sigma_k1,
        residual_bounded: residual_spectral
            <= growth_bound * sigma_k1 * slack + EXACTNESS_TOL * a.max_abs(),
    })
}

/// Violation counts of the diagnostic properties over a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaTally {
    pub runs: usize,
    pub hard_failures: usize,
    pub entries_unbounded: usize,
    pub coeff_norm_unbounded: usize,
    pub residual_unbounded: usize,
}

impl LemmaTally {
    pub fn record(&mut self, r: &LemmaReport) {
        self.runs += 1;
        self.hard_failures += usize::from(!r.hard_pass());
        self.entries_unbounded += usize::from(!r.entries_bounded);
        self.coeff_norm_unbounded += usize::from(!r.coeff_norm_bounded);
        self.residual_unbounded += usize::from(!r.residual_bounded);
    }
}

/// One line of a seeded bound sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub theorem: String,
    pub seed: u64,
    pub stride: usize,
    pub rank: usize,
    pub actual: f64,
    pub bound: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tau_grid: Vec<f64>,
    pub cases: Vec<SweepCase>,
    pub failures: usize,
    pub lemma: LemmaTally,
}

pub const SWEEP_STRIDES: [usize; 2] = [2, 3];
pub const SWEEP_RANKS: [usize; 2] = [2, 5];

/// Seeded instance for the SubID bound: a 60×40 matrix with decaying spectrum
/// on a 60-point line.
pub fn thm1_instance(seed: u64, stride: usize) -> Result<(DenseMatrix, SubsampleSpec)> {
    let geom = GridGeom::structured(vec![60], vec![false])?;
    let a = gen_decaying_spectrum(60, 40, 0.6, seed)?;
    Ok((a, SubsampleSpec::strided(geom, vec![stride], true)?))
}

/// Seeded instance for the SPID bound: smooth fields on a 13×13 grid.
pub fn thm2_instance(seed: u64, stride: usize) -> Result<(DenseMatrix, SubsampleSpec)> {
    let geom = GridGeom::structured(vec![13, 13], vec![false, false])?;
    let a = gen_smooth_fields(&[13, 13], 30, 8, seed)?;
    Ok((a, SubsampleSpec::strided(geom, vec![stride, stride], true)?))
}

/// Both bounds over `seeds` instances for every stride and rank in the
/// sweep grid, plus lemma diagnostics on the ID of each instance.
pub fn sweep(seeds: u64, tau_grid: &[f64]) -> Result<SweepReport> {
    let mut cases = Vec::new();
    let mut lemma = LemmaTally::default();
    for seed in 0..seeds {
        for stride in SWEEP_STRIDES {
            for k in SWEEP_RANKS {
                let rule = RankRule::FixedRank(k);
                let (a, spec) = thm1_instance(seed, stride)?;
                let r1 = thm1_check(&a, &spec, rule, tau_grid)?;
                lemma.record(&lemma_check(&column_id(&a, rule)?, &a)?);
                let (a, spec) = thm2_instance(seed, stride)?;
                let r2 = thm2_check(&a, &spec, rule)?;
                for (theorem, r, bound) in
                    [("subid", &r1, r1.thm1_bound), ("spid", &r2, r2.thm2_bound)]
                {
                    cases.push(SweepCase {
                        theorem: theorem.into(),
                        seed,
                        stride,
                        rank: r.rank,
                        actual: r.actual_error_spectral,
                        bound,
                        holds: r.holds,
                    });
                }
            }
        }
    }
    let failures = cases.iter().filter(|c| !c.holds).count();
    Ok(SweepReport {
        tau_grid: tau_grid.to_vec(),
        cases,
        failures,
        lemma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_exact_rank;

    #[test]
    fn eps_tau_identities() {
        let a = gen_exact_rank(8, 5, 3, 1).unwrap();
        assert_eq!(eps_tau(&a, &a, 1.0).unwrap(), 0.0);
        let s = spectral_norm(&a);
        assert!((eps_tau(&a, &a, 0.0).unwrap() - s * s).abs() < 1e-12 * s * s);
        assert!(matches!(
            eps_tau(&a, &DenseMatrix::zeros(2, 4), 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn exact_rank_with_full_sketch() {
        let a = gen_exact_rank(12, 9, 3, 4).unwrap();
        let spec =
            SubsampleSpec::all_rows(GridGeom::structured(vec![12], vec![false]).unwrap()).unwrap();
        let r = thm1_check(&a, &spec, RankRule::FixedRank(3), &DEFAULT_TAU_GRID).unwrap();
        let scale = spectral_norm(&a);
        assert!(r.holds);
        assert!(r.actual_error_spectral / scale <= 1e-9);
        assert!(r.thm1_bound.unwrap() / scale <= 1e-9, "{r:?}");
    }

    #[test]
    fn rank_beyond_sketch() {
        let a = gen_exact_rank(12, 9, 3, 4).unwrap();
        let spec = SubsampleSpec::strided(
            GridGeom::structured(vec![12], vec![false]).unwrap(),
            vec![4],
            false,
        )
        .unwrap();
        assert!(matches!(
            thm1_check(&a, &spec, RankRule::FixedRank(5), &[1.0]),
            Err(Error::RankExceedsSketch { rank: 5 })
        ));
    }

    #[test]
    fn small_sweep_holds() {
        let r = sweep(2, &DEFAULT_TAU_GRID).unwrap();
        assert_eq!(r.cases.len(), 16);
        assert_eq!(
            r.failures,
            0,
            "{:?}",
            r.cases.iter().filter(|c| !c.holds).collect::<Vec<_>>()
        );
        assert_eq!(r.lemma.hard_failures, 0);
    }

    #[test]
    fn lemma_on_full_rank_id() {
        let a = gen_exact_rank(6, 4, 4, 2).unwrap();
        let f = column_id(&a, RankRule::FixedRank(4)).unwrap();
        let r = lemma_check(&f, &a).unwrap();
        assert!(r.hard_pass() && r.exact == Some(true));
        r.ensure().unwrap();
    }
}
