pub mod archive;
pub mod blocking;
pub mod bounds;
pub mod datagen;
pub mod error;
pub mod id;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod sketch;

pub use error::{Error, Result};
pub use id::{column_id, reconstruct, spid, sub_id, IdFactors, SpidFactors, SpidStream};
pub use matrix::{DenseMatrix, RankRule};
pub use sketch::{GridGeom, InterpOperator, SubsampleSpec};
