use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    // schema / annotations
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("record has {actual} values, schema has {expected} attributes")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unknown class id {value} for attribute '{attribute}'")]
    UnknownClassId { attribute: String, value: u32 },
    #[error("annotation header does not match schema: {0}")]
    HeaderMismatch(String),

    // embeddings
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),
    #[error("file truncated or malformed: {0}")]
    TruncatedFile(String),
    #[error("non-finite component in vector '{0}'")]
    NonFiniteComponent(String),
    #[error("vector '{id}' is not unit-normalized (norm {norm})")]
    NotNormalized { id: String, norm: f64 },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("duplicate frame id '{0}'")]
    DuplicateId(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),

    // index / classifier
    #[error("cannot build an index over an empty set")]
    EmptySet,
    #[error("invalid k = {0}")]
    BadK(usize),
    #[error("neighbor '{0}' has no annotation")]
    MissingAnnotation(String),
    #[error("empty ballot")]
    EmptyBallot,
    #[error("batch item {index} failed: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    // codec
    #[error("compact text has {actual} fields, schema has {expected}")]
    FieldCountMismatch { expected: usize, actual: usize },
    #[error("field '{0}' is not a non-negative integer")]
    NonIntegerField(String),
    #[error("estimated {estimate} tokens exceeds budget of {limit}")]
    BudgetExceeded { estimate: usize, limit: usize },

    // evaluation
    #[error("gold and predictions misaligned: {0}")]
    Misaligned(String),
    #[error("no gold support for attribute '{0}'")]
    NoSupport(String),

    // dataset
    #[error("duplicate trip '{0}' in split file")]
    DuplicateTrip(String),
    #[error("trip '{0}' appears in both train and test splits")]
    SplitOverlap(String),
    #[error("scheduled frame '{frame_id}' has no {missing}")]
    MissingFrame {
        frame_id: String,
        missing: &'static str,
    },
    #[error("no metadata for trip '{0}'")]
    MissingTrip(String),
}

impl Error {
    /// Stable snake_case tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io_error",
            Error::Csv(_) => "csv_error",
            Error::Json(_) => "json_error",
            Error::InvalidSchema(_) => "invalid_schema",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::UnknownClassId { .. } => "unknown_class_id",
            Error::HeaderMismatch(_) => "header_mismatch",
            Error::BadMagic { .. } => "bad_magic",
            Error::VersionUnsupported(_) => "version_unsupported",
            Error::TruncatedFile(_) => "truncated_file",
            Error::NonFiniteComponent(_) => "non_finite_component",
            Error::NotNormalized { .. } => "not_normalized",
            Error::ZeroVector => "zero_vector",
            Error::DuplicateId(_) => "duplicate_id",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParams(_) => "invalid_params",
            Error::UnknownModel(_) => "unknown_model",
            Error::EmptySet => "empty_set",
            Error::BadK(_) => "bad_k",
            Error::MissingAnnotation(_) => "missing_annotation",
            Error::EmptyBallot => "empty_ballot",
            Error::BatchItem { .. } => "batch_item",
            Error::FieldCountMismatch { .. } => "field_count_mismatch",
            Error::NonIntegerField(_) => "non_integer_field",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::Misaligned(_) => "misaligned",
            Error::NoSupport(_) => "no_support",
            Error::DuplicateTrip(_) => "duplicate_trip",
            Error::SplitOverlap(_) => "split_overlap",
            Error::MissingFrame { .. } => "missing_frame",
            Error::MissingTrip(_) => "missing_trip",
        }
    }
}
