use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty target")]
    EmptyTarget,

    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },

    #[error("degenerate normal neighborhood at point {index}")]
    DegenerateNormal { index: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("missing normals for point-to-plane term")]
    MissingNormals,

    #[error("missing adjacency graph for the as-rigid-as-possible term")]
    MissingGraph,

    #[error("underdetermined: {got} points, need at least {need}")]
    Underdetermined { got: usize, need: usize },

    #[error("block index ({row}, {col}) out of range for dimension {dim}")]
    BlockOutOfRange { row: usize, col: usize, dim: usize },

    #[error("system matrix is not symmetric (max |A - A^T| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("bend would fold the surface: curvature * extent = {0} >= pi")]
    FoldingBend(f64),
}
