use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("energy conservation violated for {relation}: relative mismatch {mismatch:.3e} exceeds {tolerance:.0e}")]
    EnergyConservationViolated {
        relation: &'static str,
        mismatch: f64,
        tolerance: f64,
    },

    #[error("non-physical parameter: {0}")]
    NonPhysicalParameter(String),

    #[error("time grid too coarse: envelope width {width:.4} ps spans fewer than 4 steps of {step:.4} ps")]
    GridTooCoarse { width: f64, step: f64 },

    #[error("Fock truncation too tight: leakage {leakage:.3e} above n_max={n_max}")]
    TruncationTooTight { leakage: f64, n_max: usize },

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("division by zero rate: {0}")]
    DivisionByZeroRate(String),

    #[error("no convergence after {iterations} iterations (best residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("underdetermined: {free} free parameters for {targets} targets")]
    Underdetermined { free: usize, targets: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("readout curve defined up to T={available}, plan needs T={required}")]
    CurveRangeExceeded { available: u32, required: u32 },

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name used in CLI error bodies and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EnergyConservationViolated { .. } => "EnergyConservationViolated",
            Error::NonPhysicalParameter(_) => "NonPhysicalParameter",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::TruncationTooTight { .. } => "TruncationTooTight",
            Error::UnknownMode(_) => "UnknownMode",
            Error::DivisionByZeroRate(_) => "DivisionByZeroRate",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::Underdetermined { .. } => "Underdetermined",
            Error::EmptyInput => "EmptyInput",
            Error::SingularFit(_) => "SingularFit",
            Error::CurveRangeExceeded { .. } => "CurveRangeExceeded",
            Error::Config(_) => "ConfigInvalid",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    /// True for errors that mean the user's configuration is unusable.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::EnergyConservationViolated { .. }
                | Error::NonPhysicalParameter(_)
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}
