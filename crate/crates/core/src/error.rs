use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("{field} not uniformly positive at x={x} (value {value:e})")]
    NotUniformlyPositive { field: String, x: f64, value: f64 },

    #[error("x={0} outside [0,1]")]
    OutOfDomain(f64),

    #[error("mesh too coarse: {0} free degrees of freedom")]
    MeshTooCoarse(usize),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("lambda={lambda} not admissible (sup={sup})")]
    NotAdmissible { lambda: f64, sup: f64 },

    #[error("one-sided solution loses positivity at x={0}")]
    PositivityLost(f64),

    #[error("trivial initial state")]
    TrivialInitialState,

    #[error("refinement did not converge: {0}")]
    RefinementStalled(&'static str),

    #[error("spectrum entry {0} not validated by mesh refinement")]
    NotConverged(i32),

    #[error("no eigenvalue at signed index {0}")]
    NoSuchEigenvalue(i32),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
