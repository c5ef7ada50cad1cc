//! Compressed archive: metadata, per-block factors, and decompression.

mod codec;
mod frames;

pub use codec::{decode, encode, MAGIC, VERSION};
pub use frames::{read_frames, write_frames, FrameMeta, FrameReader, FrameWriter};

use serde::{Deserialize, Serialize};

use crate::blocking::{assemble, PartitionPlan};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sketch::{build_interpolator, GridGeom, Scheme, SubsampleSpec};

/// How block skeletons are lifted back to the fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterpRecipe {
    /// Skeletons are stored on the fine grid.
    Identity,
    /// Skeletons are coarse; rebuild the multilinear operator per block from
    /// the subsample recipe.
    Multilinear { scheme: Scheme },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub m: usize,
    pub n: usize,
    pub grid: GridGeom,
    pub blocks_per_axis: Vec<usize>,
    pub time_chunk: usize,
    pub subsample: SubsampleSpec,
    pub stage1_rank: usize,
    pub stage2_tol: f64,
    pub interp: InterpRecipe,
    pub qoi: Option<String>,
    pub provenance: String,
}

impl ArchiveMetadata {
    pub fn plan(&self) -> Result<PartitionPlan> {
        PartitionPlan::new(
            self.grid.clone(),
            self.blocks_per_axis.clone(),
            self.time_chunk,
        )
    }
}

/// Final two-stage factors of one spatial block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPayload {
    /// Global snapshot indices of the concatenated stage-1 skeleton columns.
    pub union_indices: Vec<usize>,
    /// Global snapshot indices of the final skeleton columns.
    pub skeleton_indices: Vec<usize>,
    /// `None` when the block compressed to rank 0.
    pub factors: Option<(DenseMatrix, DenseMatrix)>,
}

impl BlockPayload {
    pub fn rank(&self) -> usize {
        self.skeleton_indices.len()
    }

    /// Matrix entries persisted for this block: `k · (rows + n)`.
    pub fn stored_entries(&self) -> usize {
        self.factors
            .as_ref()
            .map_or(0, |(s, c)| s.data().len() + c.data().len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub metadata: ArchiveMetadata,
    pub blocks: Vec<BlockPayload>,
}

impl Archive {
    pub fn stored_entries(&self) -> usize {
        self.blocks.iter().map(BlockPayload::stored_entries).sum()
    }

    pub fn block_ranks(&self) -> Vec<usize> {
        self.blocks.iter().map(BlockPayload::rank).collect()
    }

    /// Consistency of payload shapes against the metadata.
    pub fn validate(&self) -> Result<()> {
        let md = &self.metadata;
        md.grid.check_rows(md.m)?;
        if md.subsample.geom() != &md.grid {
            return Err(Error::Metadata(
                "subsample geometry differs from grid".into(),
            ));
        }
        let blocks = md.plan()?.blocks()?;
        if blocks.len() != self.blocks.len() {
            return Err(Error::Metadata(format!(
                "plan has {} blocks, archive {}",
                blocks.len(),
                self.blocks.len()
            )));
        }
        for (b, p) in blocks.iter().zip(&self.blocks) {
            if p.union_indices.iter().any(|&i| i >= md.n)
                || p.union_indices.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(Error::Metadata(format!(
                    "block {}: bad union indices",
                    b.id
                )));
            }
            if p.skeleton_indices
                .iter()
                .any(|i| p.union_indices.binary_search(i).is_err())
            {
                return Err(Error::Metadata(format!(
                    "block {}: skeleton index outside union",
                    b.id
                )));
            }
            let k = p.rank();
            match &p.factors {
                None if k == 0 => {}
                Some((s, c)) if k > 0 => {
                    let rows = match md.interp {
                        InterpRecipe::Identity => b.rows.len(),
                        InterpRecipe::Multilinear { .. } => {
                            b.local_spec(&md.subsample)?.coarse_rows()
                        }
                    };
                    if s.shape() != (rows, k) || c.shape() != (k, md.n) {
                        return Err(Error::Metadata(format!(
                            "block {}: factor shapes {:?} / {:?}",
                            b.id,
                            s.shape(),
                            c.shape()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Metadata(format!(
                        "block {}: rank and factors disagree",
                        b.id
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Reconstructs the full `m × n` matrix: lift each block's skeleton, multiply
/// by its coefficients, and scatter the rows back.
pub fn decompress(archive: &Archive) -> Result<DenseMatrix> {
    archive.validate()?;
    let md = &archive.metadata;
    let blocks = md.plan()?.blocks()?;
    let parts = blocks
        .iter()
        .zip(&archive.blocks)
        .map(|(b, p)| {
            let recon = match &p.factors {
                None => DenseMatrix::zeros(b.rows.len(), md.n),
                Some((skeleton, coeffs)) => {
                    let fine = match md.interp {
                        InterpRecipe::Identity => skeleton.clone(),
                        InterpRecipe::Multilinear { .. } => {
                            build_interpolator(&b.local_spec(&md.subsample)?)?.apply(skeleton)?
                        }
                    };
                    fine.matmul(coeffs)?
                }
            };
            Ok((b.rows.clone(), recon))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(md.m, &parts)
}
