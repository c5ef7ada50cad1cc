use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("all columns are numerically zero")]
    ZeroMatrix,
    #[error("requested rank {requested} but residual collapsed after {achieved} steps")]
    RankUnreachable { requested: usize, achieved: usize },
    #[error("invalid rank rule: {0}")]
    InvalidRankRule(String),
    #[error("singular pivot at diagonal entry {index}")]
    SingularPivot { index: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("row count {rows} does not match grid with {points} points")]
    GeometryMismatch { rows: usize, points: usize },
    #[error("subsample selects zero rows")]
    EmptySketch,
    #[error("unstructured geometry has no interpolation scheme")]
    UnstructuredNoInterp,
    #[error("fine point {index} on axis {axis} lies outside every coarse cell")]
    ExtrapolationRequired { axis: usize, index: usize },
    #[error("invalid interpolation operator: {0}")]
    InvalidOperator(String),

    #[error("block {block} on axis {axis} would hold no points")]
    BlockTooSmall { axis: usize, block: usize },
    #[error("row {row} is not covered by any block")]
    CoverageGap { row: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("producer failed: {0}")]
    ProducerError(String),
    #[error("producer yielded no snapshots")]
    ShortStream,
    #[error("stage-1 compression failed for block {block}, chunk {chunk}: {source}")]
    Stage1Failed {
        block: usize,
        chunk: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("stage-2 compression failed for block {block}: {source}")]
    Stage2Failed {
        block: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("event log is empty")]
    EmptyLog,

    #[error("compression factor denominator is zero")]
    ZeroDenominator,
    #[error("reference matrix has zero norm")]
    ZeroReference,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    VersionUnsupported(u32),
    #[error("payload truncated")]
    TruncatedPayload,
    #[error("checksum mismatch in section {section}")]
    ChecksumMismatch { section: String },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("rank {rank} exceeds numerical rank of the sketch")]
    RankExceedsSketch { rank: usize },
    #[error("ID property violated: {0}")]
    LemmaViolation(String),
}

impl Error {
    /// Short variant name, used by the CLI on standard error.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "InvalidMatrix",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite => "NonFinite",
            Error::ZeroMatrix => "ZeroMatrix",
            Error::RankUnreachable { .. } => "RankUnreachable",
            Error::InvalidRankRule(_) => "InvalidRankRule",
            Error::SingularPivot { .. } => "SingularPivot",
            Error::NotSquare { .. } => "NotSquare",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::InvalidGeometry(_) => "InvalidGeometry",
            Error::GeometryMismatch { .. } => "GeometryMismatch",
            Error::EmptySketch => "EmptySketch",
            Error::UnstructuredNoInterp => "UnstructuredNoInterp",
            Error::ExtrapolationRequired { .. } => "ExtrapolationRequired",
            Error::InvalidOperator(_) => "InvalidOperator",
            Error::BlockTooSmall { .. } => "BlockTooSmall",
            Error::CoverageGap { .. } => "CoverageGap",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ProducerError(_) => "ProducerError",
            Error::ShortStream => "ShortStream",
            Error::Stage1Failed { .. } => "Stage1Failed",
            Error::Stage2Failed { .. } => "Stage2Failed",
            Error::EmptyLog => "EmptyLog",
            Error::ZeroDenominator => "ZeroDenominator",
            Error::ZeroReference => "ZeroReference",
            Error::BadMagic => "BadMagic",
            Error::VersionUnsupported(_) => "VersionUnsupported",
            Error::TruncatedPayload => "TruncatedPayload",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::Metadata(_) => "Metadata",
            Error::Io(_) => "Io",
            Error::RankExceedsSketch { .. } => "RankExceedsSketch",
            Error::LemmaViolation(_) => "LemmaViolation",
        }
    }
}
