use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("attribute `{0}` not found in header")]
    MissingAttribute(String),

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("missing value `{marker}` at line {line}")]
    MissingValue { line: u64, marker: String },

    #[error("cannot bin value `{value}` of attribute `{attribute}` as a number")]
    Binning { attribute: String, value: String },

    #[error("invalid group id `{0}`")]
    InvalidGid(String),

    #[error("group {gid} appears only in the {present_in} file")]
    GidMismatch { gid: u64, present_in: &'static str },

    #[error("group {gid} has {members} QI rows but {sensitive} sensitive values")]
    CardinalityMismatch {
        gid: u64,
        members: usize,
        sensitive: usize,
    },

    #[error("signature must constrain at least one attribute")]
    EmptySignature,

    #[error("table is not l-eligible for l = {l}: value `{value}` occurs {count} times in {rows} rows")]
    NotLEligible {
        l: usize,
        value: String,
        count: usize,
        rows: usize,
    },

    #[error("l = {l} exceeds the {distinct} distinct sensitive values")]
    TooFewSensitiveValues { l: usize, distinct: usize },

    #[error("random partition failed after {0} attempts")]
    PartitionFailed(usize),

    #[error("group {gid}: {count} possible worlds exceed cap {cap}")]
    WorldExplosion { gid: u64, count: u128, cap: u64 },

    #[error("group {gid} has no tuple matching the signature")]
    NoMatchingTuple { gid: u64 },

    #[error("group {gid}: tuples sharing a signature received different linkage probabilities")]
    AsymmetricLinkage { gid: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
