use std::io;

/// Errors produced while ingesting data or fitting models.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed input at record {record}: {message}")]
    Malformed { record: u64, message: String },

    #[error("duplicate object label `{0}` in catalog")]
    DuplicateLabel(String),

    #[error("catalog must contain at least two objects, found {0}")]
    CatalogTooSmall(usize),

    #[error("unknown object `{object}` at record {record}")]
    UnknownObject { object: String, record: u64 },

    #[error("duplicate position {position} for ranker `{ranker}` in group `{group}`")]
    DuplicatePosition {
        group: String,
        ranker: String,
        position: usize,
    },

    #[error(
        "positions for ranker `{ranker}` in group `{group}` are not 1..{len}: missing {missing}"
    )]
    PositionGap {
        group: String,
        ranker: String,
        len: usize,
        missing: usize,
    },

    #[error("object `{object}` ranked more than once by ranker `{ranker}` in group `{group}`")]
    DuplicateObject {
        group: String,
        ranker: String,
        object: String,
    },

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("covariate column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("non-finite covariate value for object `{object}`, variable `{variable}`")]
    NonFiniteCovariate { object: String, variable: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("covariate matrix is rank deficient: rank {rank} < p = {p}")]
    NotIdentifiable { rank: usize, p: usize },

    #[error("linear solve failed after ridge escalation")]
    LinearSolve,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("penalty doubling reached 2^60 without {0}")]
    GridCap(&'static str),

    #[error("every grid cell failed to fit")]
    AllFitsFailed,
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let record = err.position().map_or(0, |p| p.record());
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            kind => Error::Malformed {
                record,
                message: csv_kind_message(&kind),
            },
        }
    }
}

fn csv_kind_message(kind: &csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::Utf8 { err, .. } => format!("invalid UTF-8: {err}"),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        other => format!("{other:?}"),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
