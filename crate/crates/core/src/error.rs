use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("algebra mismatch: {0}")]
    AlgebraMismatch(String),
    #[error("element is not a projection (residual {0:.3e})")]
    NotAProjection(f64),
    #[error("map is not completely positive (min Choi eigenvalue {0:.3e})")]
    NotCp(f64),
    #[error("map is not contractive (norm at unit {0})")]
    NotContractive(f64),
    #[error("map is not Markov: {0}")]
    NotMarkov(String),
    #[error("Gram presentation is not positive (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("maps do not commute (residual {0:.3e})")]
    NotCommuting(f64),
    #[error("dilation is not strong (residual {0:.3e})")]
    NotStrong(f64),
    #[error("projection does not dominate p (residual {0:.3e})")]
    NotAboveP(f64),
    #[error("tuple is not row-contractive (norm excess {0:.3e})")]
    NotRowContractive(f64),
    #[error("exchange condition violated at (k,j,i)=({0},{1},{2}) with residual {3:.3e}")]
    ExchangeConditionViolated(usize, usize, usize, f64),
    #[error("unit constraint violated (residual {0:.3e})")]
    UnitConstraintViolated(f64),
    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),
    #[error("unsupported depth: {0}")]
    UnsupportedDepth(String),
    #[error("unsupported support: {0}")]
    UnsupportedSupport(String),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
}
