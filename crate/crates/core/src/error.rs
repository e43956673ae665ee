use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report, tagged with the stage it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("store: {0}")]
    Store(#[from] StoreError),

    #[error("normalization: {0}")]
    Normalization(#[from] NormalizationError),

    #[error("metric: {0}")]
    Metric(#[from] MetricError),

    #[error("search: {0}")]
    Search(#[from] SearchError),

    #[error("eval: {0}")]
    Eval(#[from] EvalError),

    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),

    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("bad magic {0:?}, expected \"VITD\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported value type tag {0}")]
    UnsupportedValueType(u8),
    #[error("truncated file: need {needed} bytes for {section}, {available} available")]
    Truncated {
        section: &'static str,
        needed: u64,
        available: u64,
    },
    #[error("{0} trailing bytes after the id table")]
    TrailingBytes(u64),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("descriptor dimension must be at least 1")]
    ZeroDim,
    #[error("data length {len} is not a multiple of dimension {dim}")]
    RaggedData { len: usize, dim: usize },
    #[error("{ids} ids supplied for {rows} rows")]
    IdCountMismatch { ids: usize, rows: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("id {0:?} contains a newline")]
    IdWithNewline(String),
    #[error("id at position {0} is not valid UTF-8")]
    InvalidUtf8(usize),
    #[error("line {line}: {message}")]
    TextParse { line: usize, message: String },
    #[error("duplicate id {id:?} on line {line} (first seen on line {first})")]
    TextDuplicateId { id: String, line: usize, first: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum NormalizationError {
    #[error("quantiles must satisfy 0 < low < high < 1, got ({low}, {high})")]
    BadQuantiles { low: f64, high: f64 },
    #[error("{scheme} requires a non-empty reference set")]
    EmptyReference { scheme: &'static str },
    #[error("fitted on dimension {fitted}, applied to dimension {actual}")]
    DimensionMismatch { fitted: usize, actual: usize },
    #[error("normalized value at row {row}, column {col} is not finite")]
    NonFiniteOutput { row: usize, col: usize },
    #[error("unknown normalization {0:?}")]
    UnknownScheme(String),
    #[error("sidecar: {0}")]
    Sidecar(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty vectors")]
    Empty,
    #[error("cosine distance undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("correlation distance undefined for a constant vector")]
    ZeroVariance,
    #[error("bray-curtis denominator {0:e} is too close to zero")]
    DegenerateBrayCurtis(f64),
    #[error("unknown metric {0:?}")]
    Unknown(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("query dimension {query} does not match index dimension {index}")]
    DimensionMismatch { query: usize, index: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("bad depth {0:?}, expected a positive integer or \"full\"")]
    BadDepth(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("query {0:?} has no positives")]
    EmptyPositives(String),
    #[error("query {query:?}: {id:?} is both positive and junk")]
    PositiveIsJunk { query: String, id: String },
    #[error("query {0:?} has junk entries but the protocol is N-S")]
    JunkUnderNs(String),
    #[error("duplicate ground-truth query {0:?}")]
    DuplicateQuery(String),
    #[error("no ranking supplied for query {0:?}")]
    MissingRanking(String),
    #[error("more than one ranking supplied for query {0:?}")]
    DuplicateRanking(String),
    #[error("ranking for {query:?} has depth {depth}, N-S needs at least 4")]
    ShallowRanking { query: String, depth: usize },
    #[error("expected protocol {expected}, ground truth is {actual}")]
    WrongProtocol {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("query {query:?} references {id:?}, which is not in the index")]
    UnknownId { query: String, id: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("missing ground-truth file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: {message}")]
    Malformed { file: String, message: String },
    #[error("query image {0:?} is not among the indexed images")]
    UnknownQueryImage(String),
    #[error("positive {id:?} of query {query:?} is not among the indexed images")]
    UnknownPositive { query: String, id: String },
    #[error("query {0:?} has no positives")]
    EmptyPositives(String),
    #[error("malformed image stem {0:?}")]
    MalformedStem(String),
    #[error("group {0} has a single image and no positives")]
    SingletonGroup(String),
    #[error("group {0} has no \"00\" query member")]
    MissingGroupQuery(String),
    #[error("{0} images is not a multiple of 4")]
    NotMultipleOfFour(usize),
    #[error("sequence gap: expected {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("duplicate sequence number {0}")]
    DuplicateSequence(u64),
    #[error("no ground-truth queries found")]
    NoQueries,
    #[error("json: {0}")]
    Json(String),
    #[error(transparent)]
    Invalid(#[from] EvalError),
}
