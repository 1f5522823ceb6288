use thiserror::Error;

/// Errors produced by mesh construction, assembly and time stepping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh subdivision count must be at least 1")]
    EmptyMesh,
    #[error("degenerate tetrahedron {tet}: volume {volume:e}")]
    DegenerateElement { tet: usize, volume: f64 },
    #[error("inconsistent mesh topology: {0}")]
    MeshTopology(String),
    #[error("tetrahedron index {0} out of range")]
    InvalidElement(usize),
    #[error("point lies outside tetrahedron {tet} (barycentric coordinates {bary:?})")]
    PointOutsideElement { tet: usize, bary: [f64; 4] },
    #[error("no {domain} quadrature rule of degree {degree}")]
    UnsupportedQuadrature { domain: &'static str, degree: usize },
    #[error("Gram matrix of tetrahedron {0} is not positive definite")]
    GramNotSpd(usize),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("singular system: breakdown at pivot {pivot}")]
    SingularSystem { pivot: usize },
    #[error("backward error {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("Picard iteration did not converge in {iterations} iterations (last increment {increment:e})")]
    PicardDivergence { iterations: usize, increment: f64 },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("no exact solution configured")]
    MissingExactSolution,
    #[error("mesh with m = {m} is too large for the dense inf-sup estimator (limit m = {limit})")]
    MeshTooLarge { m: usize, limit: usize },
    #[error("dense eigen-solve failed to converge")]
    Eigen,
    #[error("malformed field data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
