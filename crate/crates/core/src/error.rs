use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("angle {0} rad is outside the open field of view (-pi/2, pi/2)")]
    InvalidAngle(f64),
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),
    #[error("angles {0} and {1} coincide")]
    DuplicateAngle(f64, f64),
    #[error("manifold with {columns} columns exceeds {antennas} antennas")]
    RankOverflow { columns: usize, antennas: usize },
    #[error("manifold Gram matrix is ill-conditioned (condition {0:e})")]
    IllConditioned(f64),
    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("scenario 1 needs K to divide 32, got K = {0}")]
    InvalidDivisor(usize),
    #[error("signal dimension {signal_dim} leaves no noise subspace with {antennas} antennas")]
    TooFewAntennas { signal_dim: usize, antennas: usize },
    #[error("covariance is degenerate (zero trace)")]
    DegenerateCovariance,
    #[error("every grid point was excluded by the denominator guard")]
    AllPointsDegenerate,
    #[error("target {0} is not visible in any band")]
    TargetInvisibleEverywhere(usize),
    #[error("projected singular vector lies in the nulled span")]
    DegenerateProjection,
    #[error("Fisher information is rank deficient")]
    Unidentifiable,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
