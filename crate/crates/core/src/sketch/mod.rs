//! Coarse-grid row subsampling (the sketch `B = A(J, :)`) and the
//! interpolation operator lifting coarse data back to the fine grid.

mod grid;
mod interp;
mod subsample;

pub use grid::GridGeom;
pub(crate) use grid::{flat_index, for_each_index, multi_index};
pub use interp::{
    build_interpolator, format_triplets, parse_triplets, InterpForm, InterpOperator, Scheme,
};
pub use subsample::{subsample, Selection, SubsampleSpec};

use crate::error::Result;
use crate::matrix::DenseMatrix;

pub fn apply_interpolator(m_op: &InterpOperator, coarse: &DenseMatrix) -> Result<DenseMatrix> {
    m_op.apply(coarse)
}
