use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacity exceeded: dimension {dim} is above the limit {limit}")]
    Capacity { dim: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not diagonal (max off-diagonal {0:.3e})")]
    NotDiagonal(f64),

    #[error("state is not normalized (norm^2 = {0:.12})")]
    NotNormalized(f64),

    #[error("meter reading {0} is not on the meter grid")]
    OffGrid(f64),

    #[error("shifted meter argument leaves the grid: |kappa| * max|x| = {shift} > Y/2 = {limit}")]
    ShiftOffGrid { shift: f64, limit: f64 },

    #[error("pointer packet vanishes at interior grid point y = {0}")]
    PacketZero(f64),

    #[error("zero likelihood for the requested outcome")]
    ZeroLikelihood,

    #[error("events are not strictly time-ordered at index {0}")]
    UnorderedEvents(usize),

    #[error("time {t} precedes the preparation time {t0}")]
    TimeBeforeStart { t: f64, t0: f64 },

    #[error("density matrix has eigenvalue {0:.3e} below the clamp tolerance")]
    NotPositive(f64),

    #[error("trace mismatch: {0:.3e}")]
    TraceMismatch(f64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("ODE step too large: step-halving changed the result by {estimate:.3e} > {tolerance:.3e}")]
    StepTooLarge { estimate: f64, tolerance: f64 },

    #[error("cell width {kappa} is not an integer multiple of the lattice spacing {spacing}")]
    IncompatibleCell { kappa: f64, spacing: f64 },

    #[error("state has no symmetric component")]
    ZeroSymmetric,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
