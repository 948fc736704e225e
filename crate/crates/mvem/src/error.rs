use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate element {cell}: area {area:e} below threshold for diameter {diameter:e}")]
    DegenerateElement {
        cell: usize,
        area: f64,
        diameter: f64,
    },

    #[error("degenerate edge of length {0:e}")]
    DegenerateEdge(f64),

    #[error("non-manifold edge ({0}, {1}) with more than two incident cells")]
    NonManifoldEdge(usize, usize),

    #[error("cell {cell} is not star-shaped with respect to its centroid (fan triangle {triangle} has non-positive area)")]
    NotStarShaped { cell: usize, triangle: usize },

    #[error("numerically rank-deficient basis: pivot {pivot:e} below {threshold:e} at column {column}")]
    RankDeficient {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("nullspace rank anomaly: expected {expected} near-zero singular values, found {found}")]
    RankAnomaly { expected: usize, found: usize },

    #[error("matrix numerically singular (estimated condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("coefficient tensor not symmetric positive definite at ({x}, {y})")]
    InvalidCoefficient { x: f64, y: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sparse factorization failed: {0}")]
    SolverFailure(String),

    #[error("mesh import failed: {0}")]
    MeshImport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
