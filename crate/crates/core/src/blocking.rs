//! Spatial partitioning and the two-stage blocked ID.
//!
//! Stage 1 compresses each temporal chunk of a block to a fixed rank. Stage 2
//! runs a tolerance-driven ID on the concatenated stage-1 skeletons and
//! composes the coefficients, `C¹′ = C¹ · C⁰′`, where `C⁰′` is the
//! block-diagonal stack of stage-1 coefficient matrices.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::id::{column_id, column_id_with, IdFactors};
use crate::matrix::{DenseMatrix, OnCollapse, RankRule};
use crate::sketch::{
    for_each_index, multi_index, GridGeom, InterpOperator, Selection, SubsampleSpec,
};

/// Spatial blocks plus the temporal chunk width `n / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub geom: GridGeom,
    pub blocks_per_axis: Vec<usize>,
    pub time_chunk: usize,
}

impl PartitionPlan {
    pub fn new(geom: GridGeom, blocks_per_axis: Vec<usize>, time_chunk: usize) -> Result<Self> {
        if time_chunk == 0 {
            return Err(Error::InvalidConfig("time chunk must be >= 1".into()));
        }
        let plan = Self {
            geom,
            blocks_per_axis,
            time_chunk,
        };
        plan.blocks()?;
        Ok(plan)
    }

    pub fn blocks(&self) -> Result<Vec<Block>> {
        blocks(&self.geom, &self.blocks_per_axis)
    }

    /// Chunk count `N` for a stream of `n` snapshots (last chunk may be short).
    pub fn chunk_count(&self, n: usize) -> usize {
        n.div_ceil(self.time_chunk)
    }
}

/// One spatial block: the global rows it owns and its own local geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: usize,
    /// Global row indices, increasing, in the block's local flat order.
    pub rows: Vec<usize>,
    pub geom: GridGeom,
}

impl Block {
    /// Restricts a whole-grid subsample recipe to this block.
    ///
    /// A periodic axis that is split into several blocks is open inside each
    /// block, so the boundary is always included there.
    pub fn local_spec(&self, global: &SubsampleSpec) -> Result<SubsampleSpec> {
        match (global.selection(), &self.geom) {
            (
                Selection::Strided {
                    strides,
                    include_boundary,
                },
                GridGeom::Structured { periodic, .. },
            ) => {
                let GridGeom::Structured {
                    periodic: global_periodic,
                    ..
                } = global.geom()
                else {
                    unreachable!("strided selection implies structured grid")
                };
                let opened = global_periodic.iter().zip(periodic).any(|(&g, &l)| g && !l);
                SubsampleSpec::strided(
                    self.geom.clone(),
                    strides.clone(),
                    *include_boundary || opened,
                )
            }
            (Selection::Explicit { rows }, GridGeom::Unstructured { .. }) => {
                let local: Vec<usize> = self
                    .rows
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| rows.binary_search(g).is_ok())
                    .map(|(l, _)| l)
                    .collect();
                SubsampleSpec::explicit(self.geom.clone(), local)
            }
            _ => Err(Error::InvalidGeometry(
                "subsample recipe does not match block geometry".into(),
            )),
        }
    }
}

fn axis_ranges(axis: usize, len: usize, parts: usize) -> Result<Vec<Range<usize>>> {
    if parts == 0 {
        return Err(Error::InvalidConfig(format!("axis {axis}: zero blocks")));
    }
    let size = len / parts;
    if size == 0 {
        return Err(Error::BlockTooSmall {
            axis,
            block: len.min(parts - 1),
        });
    }
    // The last block absorbs the remainder.
    Ok((0..parts)
        .map(|b| b * size..if b + 1 == parts { len } else { (b + 1) * size })
        .collect())
}

fn blocks(geom: &GridGeom, blocks_per_axis: &[usize]) -> Result<Vec<Block>> {
    match geom {
        GridGeom::Structured { dims, periodic } => {
            if blocks_per_axis.len() != dims.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} block counts for {} axes",
                    blocks_per_axis.len(),
                    dims.len()
                )));
            }
            let ranges = dims
                .iter()
                .zip(blocks_per_axis)
                .enumerate()
                .map(|(a, (&d, &b))| axis_ranges(a, d, b))
                .collect::<Result<Vec<_>>>()?;
            let counts: Vec<usize> = ranges.iter().map(Vec::len).collect();
            let total: usize = counts.iter().product();
            let mut out = Vec::with_capacity(total);
            for id in 0..total {
                let coord = multi_index(&counts, id);
                let boxes: Vec<&Range<usize>> =
                    coord.iter().zip(&ranges).map(|(&c, r)| &r[c]).collect();
                let local_dims: Vec<usize> = boxes.iter().map(|r| r.len()).collect();
                let local_periodic = periodic
                    .iter()
                    .zip(blocks_per_axis)
                    .map(|(&p, &b)| p && b == 1)
                    .collect();
                let mut rows = Vec::with_capacity(local_dims.iter().product());
                for_each_index(&local_dims, |local| {
                    let g: Vec<usize> = local
                        .iter()
                        .zip(&boxes)
                        .map(|(&l, r)| r.start + l)
                        .collect();
                    rows.push(crate::sketch::flat_index(dims, &g));
                });
                let geom = GridGeom::structured_relaxed(local_dims, local_periodic)?;
                out.push(Block { id, rows, geom });
            }
            Ok(out)
        }
        GridGeom::Unstructured { points } => {
            let [parts] = blocks_per_axis else {
                return Err(Error::InvalidConfig(
                    "unstructured grids take a single block count".into(),
                ));
            };
            axis_ranges(0, points.len(), *parts)?
                .into_iter()
                .enumerate()
                .map(|(id, r)| {
                    let geom = GridGeom::unstructured(points[r.clone()].to_vec())?;
                    Ok(Block {
                        id,
                        rows: r.collect(),
                        geom,
                    })
                })
                .collect()
        }
    }
}

/// Disjoint, covering row-index sets of axis-aligned blocks, ordered
/// lexicographically by block coordinate (first axis fastest).
pub fn partition(geom: &GridGeom, blocks_per_axis: &[usize]) -> Result<Vec<Vec<usize>>> {
    Ok(blocks(geom, blocks_per_axis)?
        .into_iter()
        .map(|b| b.rows)
        .collect())
}

/// Scatters per-block rows back into an `m × n` matrix.
pub fn assemble(m: usize, blocks: &[(Vec<usize>, DenseMatrix)]) -> Result<DenseMatrix> {
    let n = blocks
        .first()
        .map(|b| b.1.cols())
        .ok_or(Error::CoverageGap { row: 0 })?;
    let mut covered = vec![false; m];
    let mut out = DenseMatrix::zeros(m, n);
    for (rows, part) in blocks {
        if part.shape() != (rows.len(), n) {
            return Err(Error::DimensionMismatch(format!(
                "block with {} rows has shape {:?}",
                rows.len(),
                part.shape()
            )));
        }
        for (local, &g) in rows.iter().enumerate() {
            if g >= m || std::mem::replace(&mut covered[g], true) {
                return Err(Error::InvalidConfig(format!(
                    "row {g} out of range or covered twice"
                )));
            }
            for j in 0..n {
                out[(g, j)] = part[(local, j)];
            }
        }
    }
    if let Some(row) = covered.iter().position(|&c| !c) {
        return Err(Error::CoverageGap { row });
    }
    Ok(out)
}

/// Stage-1 ID of one coarse chunk at rank `min(k, chunk width)`.
///
/// Returns `None` for a numerically zero chunk. If the chunk has lower
/// numerical rank than requested, the rank is clamped to what was reached.
pub fn stage1_compress(coarse_chunk: &DenseMatrix, k: usize) -> Result<Option<IdFactors>> {
    if k == 0 {
        return Err(Error::InvalidRankRule("stage-1 rank must be >= 1".into()));
    }
    let rank = k.min(coarse_chunk.cols()).min(coarse_chunk.rows());
    match column_id_with(
        coarse_chunk,
        RankRule::FixedRank(rank),
        OnCollapse::Truncate,
    ) {
        Ok(f) => Ok(Some(f)),
        Err(Error::ZeroMatrix) => Ok(None),
        Err(e) => Err(e),
    }
}

/// [`stage1_compress`] on a fine-grid chunk, subsampling it first.
pub fn stage1_compress_fine(
    chunk: &DenseMatrix,
    spec: &SubsampleSpec,
    k: usize,
) -> Result<Option<IdFactors>> {
    stage1_compress(&spec.subsample(chunk)?, k)
}

/// Stage-1 result for the snapshot columns `offset .. offset + width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkFactors {
    pub offset: usize,
    pub width: usize,
    /// Coarse row count of the chunk.
    pub rows: usize,
    pub factors: Option<IdFactors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageFactors {
    stage1: Vec<ChunkFactors>,
    /// Global snapshot index of every column of `A⁰′`, strictly increasing.
    union_indices: Vec<usize>,
    /// Per `A⁰′` column: `(chunk, row of C_j)`.
    origin: Vec<(usize, usize)>,
    stage2: Option<IdFactors>,
    final_factors: Option<IdFactors>,
    coarse_rows: usize,
    n: usize,
    interp: Option<InterpOperator>,
}

impl TwoStageFactors {
    pub fn stage1(&self) -> &[ChunkFactors] {
        &self.stage1
    }

    pub fn union_indices(&self) -> &[usize] {
        &self.union_indices
    }

    /// Stage-2 ID of the concatenated skeleton matrix `A⁰′`.
    pub fn stage2(&self) -> Option<&IdFactors> {
        self.stage2.as_ref()
    }

    /// Final factors over global snapshot indices: skeleton `A¹′` and `C¹′`.
    /// `None` when every chunk was numerically zero.
    pub fn final_factors(&self) -> Option<&IdFactors> {
        self.final_factors.as_ref()
    }

    pub fn final_rank(&self) -> usize {
        self.final_factors
            .as_ref()
            .map_or(0, IdFactors::achieved_rank)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn interp(&self) -> Option<&InterpOperator> {
        self.interp.as_ref()
    }

    pub fn with_interp(mut self, interp: InterpOperator) -> Result<Self> {
        if interp.coarse_rows() != self.coarse_rows {
            return Err(Error::DimensionMismatch(format!(
                "interpolator expects {} coarse rows, skeleton has {}",
                interp.coarse_rows(),
                self.coarse_rows
            )));
        }
        self.interp = Some(interp);
        Ok(self)
    }

    /// `(chunk, local column)` of a global snapshot index.
    pub fn locate(&self, global: usize) -> Option<(usize, usize)> {
        self.stage1
            .iter()
            .position(|c| (c.offset..c.offset + c.width).contains(&global))
            .map(|j| (j, global - self.stage1[j].offset))
    }

    pub fn global_index(&self, chunk: usize, local: usize) -> Option<usize> {
        let c = self.stage1.get(chunk)?;
        (local < c.width).then_some(c.offset + local)
    }

    /// The block-diagonal `C⁰′` as a dense `|I_U| × n` matrix.
    pub fn materialize_c0(&self) -> Option<DenseMatrix> {
        if self.origin.is_empty() {
            return None;
        }
        let mut c0 = DenseMatrix::zeros(self.origin.len(), self.n);
        for (u, &(j, r)) in self.origin.iter().enumerate() {
            let chunk = &self.stage1[j];
            let cj = chunk
                .factors
                .as_ref()
                .expect("origin points at a non-empty chunk")
                .coeffs();
            for l in 0..chunk.width {
                c0[(u, chunk.offset + l)] = cj[(r, l)];
            }
        }
        Some(c0)
    }

    /// Reconstruction on the grid the skeleton lives on, lifted through the
    /// interpolator when one is attached.
    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        let rows = self
            .interp
            .as_ref()
            .map_or(self.coarse_rows, InterpOperator::fine_rows);
        match &self.final_factors {
            None => Ok(DenseMatrix::zeros(rows, self.n)),
            Some(f) => {
                let skeleton = match &self.interp {
                    Some(m) => m.apply(f.skeleton())?,
                    None => f.skeleton().clone(),
                };
                skeleton.matmul(f.coeffs())
            }
        }
    }
}

/// Stage 2: tolerance ID of the concatenated stage-1 skeletons and
/// coefficient composition. Chunks must tile `0..n` in order.
pub fn stage2_compress(stage1: Vec<ChunkFactors>, tol: f64) -> Result<TwoStageFactors> {
    let first = stage1
        .first()
        .ok_or_else(|| Error::InvalidConfig("stage 2 needs at least one chunk".into()))?;
    if first.offset != 0 {
        return Err(Error::InvalidConfig(
            "first chunk must start at column 0".into(),
        ));
    }
    let mut n = 0;
    let coarse_rows = first.rows;
    for c in &stage1 {
        if c.rows != coarse_rows {
            return Err(Error::DimensionMismatch("chunk row counts differ".into()));
        }
        if c.offset != n || c.width == 0 {
            return Err(Error::InvalidConfig(format!(
                "chunk at offset {} (width {}) does not continue at column {n}",
                c.offset, c.width
            )));
        }
        if let Some(f) = &c.factors {
            if f.source_cols() != c.width {
                return Err(Error::DimensionMismatch(
                    "chunk width and coefficient columns differ".into(),
                ));
            }
            if f.skeleton().rows() != c.rows {
                return Err(Error::DimensionMismatch(
                    "stage-1 skeleton row count differs from chunk".into(),
                ));
            }
        }
        n += c.width;
    }

    // A⁰′ columns sorted by global index within each chunk.
    let mut union_indices = Vec::new();
    let mut origin = Vec::new();
    let mut columns: Vec<&[f64]> = Vec::new();
    for (j, c) in stage1.iter().enumerate() {
        let Some(f) = &c.factors else { continue };
        let mut order: Vec<usize> = (0..f.achieved_rank()).collect();
        order.sort_by_key(|&p| f.skeleton_indices()[p]);
        for p in order {
            union_indices.push(c.offset + f.skeleton_indices()[p]);
            origin.push((j, p));
            columns.push(f.skeleton().col(p));
        }
    }
    debug_assert!(union_indices.windows(2).all(|w| w[0] < w[1]));

    if columns.is_empty() {
        return Ok(TwoStageFactors {
            stage1,
            union_indices,
            origin,
            stage2: None,
            final_factors: None,
            coarse_rows,
            n,
            interp: None,
        });
    };

    let a0 = DenseMatrix::from_columns(&columns)?;
    let stage2 = column_id(&a0, RankRule::Tolerance(tol))?;

    // C¹′ = C¹ · C⁰′, one diagonal block at a time.
    let c1 = stage2.coeffs();
    let k = stage2.achieved_rank();
    let mut composed = DenseMatrix::zeros(k, n);
    let mut u = 0;
    for c in &stage1 {
        let Some(f) = &c.factors else { continue };
        let width = f.achieved_rank();
        let rows: Vec<usize> = origin[u..u + width].iter().map(|o| o.1).collect();
        let cj = f.coeffs().select_rows(&rows)?;
        let c1_block = DenseMatrix::from_fn(k, width, |i, l| c1[(i, u + l)]);
        let part = c1_block.matmul(&cj)?;
        for l in 0..c.width {
            composed.col_mut(c.offset + l).copy_from_slice(part.col(l));
        }
        u += width;
    }

    let global: Vec<usize> = stage2
        .skeleton_indices()
        .iter()
        .map(|&p| union_indices[p])
        .collect();
    let final_factors = IdFactors::new(global, composed, stage2.skeleton().clone())?;

    Ok(TwoStageFactors {
        stage1,
        union_indices,
        origin,
        stage2: Some(stage2),
        final_factors: Some(final_factors),
        coarse_rows,
        n,
        interp: None,
    })
}

/// Batch form of the two-stage scheme on an in-memory coarse matrix.
pub fn two_stage_compress(
    coarse: &DenseMatrix,
    chunk: usize,
    k: usize,
    tol: f64,
) -> Result<TwoStageFactors> {
    if chunk == 0 {
        return Err(Error::InvalidConfig("time chunk must be >= 1".into()));
    }
    let n = coarse.cols();
    let mut stage1 = Vec::with_capacity(n.div_ceil(chunk));
    for offset in (0..n).step_by(chunk) {
        let width = chunk.min(n - offset);
        let idx: Vec<usize> = (offset..offset + width).collect();
        let factors = stage1_compress(&coarse.select_columns(&idx)?, k)?;
        stage1.push(ChunkFactors {
            offset,
            width,
            rows: coarse.rows(),
            factors,
        });
    }
    stage2_compress(stage1, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: Vec<usize>) -> GridGeom {
        let p = vec![false; dims.len()];
        GridGeom::structured(dims, p).unwrap()
    }

    #[test]
    fn partition_shapes() {
        assert_eq!(
            partition(&grid(vec![3, 2]), &[1, 1]).unwrap(),
            vec![(0..6).collect::<Vec<_>>()]
        );
        let p = partition(&grid(vec![20]), &[2]).unwrap();
        assert_eq!(p, vec![(0..10).collect::<Vec<_>>(), (10..20).collect()]);
        let p = partition(&grid(vec![20, 20]), &[10, 10]).unwrap();
        assert_eq!(p.len(), 100);
        assert!(p.iter().all(|b| b.len() == 4));
        assert_eq!(p[1], vec![2, 3, 22, 23]);
        assert_eq!(p[10], vec![40, 41, 60, 61]);
    }

    #[test]
    fn remainder_goes_to_last_block() {
        let p = partition(&grid(vec![7]), &[3]).unwrap();
        assert_eq!(p.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 3]);
        assert!(matches!(
            partition(&grid(vec![3]), &[4]),
            Err(Error::BlockTooSmall { .. })
        ));
    }

    #[test]
    fn split_periodic_axis_opens_blocks() {
        let g = GridGeom::structured(vec![12], vec![true]).unwrap();
        let spec = SubsampleSpec::strided(g.clone(), vec![4], false).unwrap();
        let blocks = blocks(&g, &[2]).unwrap();
        let local = blocks[0].local_spec(&spec).unwrap();
        assert_eq!(local.rows(), &[0, 4, 5]);
        let whole = blocks_for_one(&g).local_spec(&spec).unwrap();
        assert_eq!(whole.rows(), &[0, 4, 8]);
    }

    fn blocks_for_one(g: &GridGeom) -> Block {
        blocks(g, &[1]).unwrap().remove(0)
    }

    #[test]
    fn unstructured_blocks_and_explicit_selection() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let g = GridGeom::unstructured(pts).unwrap();
        let spec = SubsampleSpec::explicit(g.clone(), vec![1, 2, 4]).unwrap();
        let bl = blocks(&g, &[2]).unwrap();
        assert_eq!(bl[1].rows, vec![3, 4, 5]);
        assert_eq!(bl[0].local_spec(&spec).unwrap().rows(), &[1, 2]);
        assert_eq!(bl[1].local_spec(&spec).unwrap().rows(), &[1]);
    }

    #[test]
    fn assemble_round_trip_and_gap() {
        let a = DenseMatrix::from_fn(6, 3, |i, j| (10 * i + j) as f64);
        let parts: Vec<(Vec<usize>, DenseMatrix)> = partition(&grid(vec![3, 2]), &[3, 1])
            .unwrap()
            .into_iter()
            .map(|rows| {
                let m = a.select_rows(&rows).unwrap();
                (rows, m)
            })
            .collect();
        assert_eq!(assemble(6, &parts).unwrap(), a);
        assert!(matches!(
            assemble(6, &parts[1..]),
            Err(Error::CoverageGap { row: 0 })
        ));
    }

    #[test]
    fn stage1_identical_columns_and_clamp() {
        let chunk = DenseMatrix::from_columns(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let f = stage1_compress(&chunk, 1).unwrap().unwrap();
        assert_eq!(f.skeleton_indices(), &[0]);
        assert_eq!(f.coeffs().data(), &[1.0, 1.0, 1.0]);

        let narrow =
            DenseMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.3 * (i + j) as f64 });
        assert_eq!(
            stage1_compress(&narrow, 4)
                .unwrap()
                .unwrap()
                .achieved_rank(),
            2
        );
        assert!(stage1_compress(&DenseMatrix::zeros(3, 2), 1)
            .unwrap()
            .is_none());
    }

    #[test]
    fn duplicate_skeletons_collapse_in_stage2() {
        let col = [1.0, -1.0, 2.0];
        let chunk = DenseMatrix::from_columns(&[col, col]).unwrap();
        let a = DenseMatrix::hcat(&[&chunk, &chunk]).unwrap();
        let ts = two_stage_compress(&a, 2, 1, 1e-10).unwrap();
        assert_eq!(ts.union_indices(), &[0, 2]);
        assert_eq!(ts.final_rank(), 1);
        assert_eq!(ts.final_factors().unwrap().coeffs().shape(), (1, 4));
        assert_eq!(ts.reconstruct().unwrap(), a);
    }

    #[test]
    fn zero_chunks_are_skipped() {
        let mut a = DenseMatrix::zeros(3, 6);
        for j in 3..6 {
            a.col_mut(j).copy_from_slice(&[1.0, 2.0, j as f64]);
        }
        let ts = two_stage_compress(&a, 3, 2, 1e-12).unwrap();
        assert!(ts.stage1()[0].factors.is_none());
        let err = ts.reconstruct().unwrap().sub(&a).unwrap().max_abs();
        assert!(err < 1e-12);
        let zero = two_stage_compress(&DenseMatrix::zeros(2, 4), 2, 1, 1e-6).unwrap();
        assert_eq!(zero.final_rank(), 0);
        assert_eq!(zero.reconstruct().unwrap(), DenseMatrix::zeros(2, 4));
    }

    #[test]
    fn index_round_trip() {
        let a = DenseMatrix::from_fn(4, 10, |i, j| ((i + 1) * (j + 2)) as f64);
        let ts = two_stage_compress(&a, 3, 1, 1e-10).unwrap();
        for g in 0..10 {
            let (j, l) = ts.locate(g).unwrap();
            assert_eq!(ts.global_index(j, l), Some(g));
        }
        assert_eq!(ts.locate(10), None);
        assert_eq!(ts.stage1().last().unwrap().width, 1);
    }

    #[test]
    fn stage2_rejects_gaps() {
        let f = stage1_compress(&DenseMatrix::identity(2), 1).unwrap();
        let chunks = vec![ChunkFactors {
            offset: 1,
            width: 2,
            rows: 2,
            factors: f,
        }];
        assert!(stage2_compress(chunks, 1e-6).is_err());
        assert!(stage2_compress(Vec::new(), 1e-6).is_err());
    }
}
