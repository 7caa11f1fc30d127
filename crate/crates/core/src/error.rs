use std::path::PathBuf;

use thiserror::Error;

use crate::geomath::GeoError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure an editing command, loader or validator can report.
///
/// The variant name doubles as the wire-level error kind (see [`Error::kind`]),
/// so renaming a variant is a protocol change.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("layer `{0}` already exists")]
    DuplicateLayer(String),
    #[error("layer `{0}` is reserved")]
    ReservedLayer(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("layer `{layer}` has no attribute `{key}`")]
    UnknownAttribute { layer: String, key: String },
    #[error("layer `{layer}` already has attribute `{key}`")]
    DuplicateAttribute { layer: String, key: String },
    #[error("attribute `{0}` is reserved")]
    ReservedAttribute(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("division point of `{0}` coincides with a terminal node")]
    SplitAtEndpoint(String),
    #[error("`{0}` is a short-pipe and cannot be divided")]
    ShortPipeNotDividable(String),
    #[error("split assignment misses `{0}`")]
    IncompleteAssignment(String),
    #[error("subnode index {index} out of range for {count} subnodes")]
    InvalidSubnodeIndex { index: usize, count: usize },
    #[error("operation would connect node `{0}` to itself")]
    SelfLoop(String),
    #[error("a short-pipe already connects `{0}` and `{1}`")]
    DuplicateShortPipe(String, String),
    #[error("route endpoint does not match node `{0}`")]
    EndpointMismatch(String),
    #[error("node `{node}` still has dependents: {dependents:?}")]
    NodeInUse { node: String, dependents: Vec<String> },
    #[error("pipelines do not form a single chain: {0}")]
    NotAChain(String),
    #[error("unknown sublayer `{0}`")]
    UnknownSublayer(String),
    #[error("pipeline `{pipeline}` already belongs to group `{group}`")]
    AlreadyGrouped { pipeline: String, group: String },
    #[error("placement does not match kind of layer `{0}`")]
    PlacementKindMismatch(String),
    #[error("{0} control points given, at least 3 required")]
    TooFewControlPoints(usize),
    #[error("control points are degenerate (collinear pixels)")]
    DegenerateControlPoints,
    #[error("affine transform is not invertible")]
    DegenerateTransform,
    #[error("route must contain at least one point")]
    EmptyRoute,
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("invalid position: {0}")]
    InvalidPosition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("invalid command: {0}")]
    ValidationError(String),
    #[error("journal entry {seq} diverged: {reason}")]
    ReplayDivergence { seq: u64, reason: String },
    #[error("mandatory file missing: {}", .0.display())]
    MissingMandatoryFile(PathBuf),
    #[error("{}{}: {cause}", file.display(), index.map(|i| format!(": feature {i}")).unwrap_or_default())]
    ParseError { file: PathBuf, index: Option<usize>, cause: String },
    #[error("{}: feature {index}: {cause}", file.display())]
    SchemaError { file: PathBuf, index: usize, cause: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    /// Stable error kind name used in service responses.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownId(_) => "UnknownId",
            Error::DuplicateLayer(_) => "DuplicateLayer",
            Error::ReservedLayer(_) => "ReservedLayer",
            Error::UnknownLayer(_) => "UnknownLayer",
            Error::UnknownAttribute { .. } => "UnknownAttribute",
            Error::DuplicateAttribute { .. } => "DuplicateAttribute",
            Error::ReservedAttribute(_) => "ReservedAttribute",
            Error::InvalidGeometry(_) => "InvalidGeometry",
            Error::SplitAtEndpoint(_) => "SplitAtEndpoint",
            Error::ShortPipeNotDividable(_) => "ShortPipeNotDividable",
            Error::IncompleteAssignment(_) => "IncompleteAssignment",
            Error::InvalidSubnodeIndex { .. } => "InvalidSubnodeIndex",
            Error::SelfLoop(_) => "SelfLoop",
            Error::DuplicateShortPipe(..) => "DuplicateShortPipe",
            Error::EndpointMismatch(_) => "EndpointMismatch",
            Error::NodeInUse { .. } => "NodeInUse",
            Error::NotAChain(_) => "NotAChain",
            Error::UnknownSublayer(_) => "UnknownSublayer",
            Error::AlreadyGrouped { .. } => "AlreadyGrouped",
            Error::PlacementKindMismatch(_) => "PlacementKindMismatch",
            Error::TooFewControlPoints(_) => "TooFewControlPoints",
            Error::DegenerateControlPoints => "DegenerateControlPoints",
            Error::DegenerateTransform => "DegenerateTransform",
            Error::EmptyRoute => "EmptyRoute",
            Error::InvalidRoute(_) => "InvalidRoute",
            Error::InvalidPosition(_) => "InvalidPosition",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::DanglingReference(_) => "DanglingReference",
            Error::UnknownOperation(_) => "UnknownOperation",
            Error::ValidationError(_) => "ValidationError",
            Error::ReplayDivergence { .. } => "ReplayDivergence",
            Error::MissingMandatoryFile(_) => "MissingMandatoryFile",
            Error::ParseError { .. } => "ParseError",
            Error::SchemaError { .. } => "SchemaError",
            Error::Io { .. } => "IoError",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl From<GeoError> for Error {
    fn from(err: GeoError) -> Self {
        match err {
            GeoError::EmptyRoute => Error::EmptyRoute,
            GeoError::InvalidRoute(msg) => Error::InvalidRoute(msg),
            GeoError::InvalidPosition(msg) => Error::InvalidPosition(msg),
            GeoError::TooFewControlPoints(n) => Error::TooFewControlPoints(n),
            GeoError::DegenerateControlPoints => Error::DegenerateControlPoints,
            GeoError::DegenerateTransform => Error::DegenerateTransform,
        }
    }
}
