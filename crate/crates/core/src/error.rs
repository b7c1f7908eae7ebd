use thiserror::Error;

/// Errors raised by grid construction, assembly and the spectral solvers.
///
/// Variants whose [`Error::is_refusal`] is true signal that a solver declined
/// to run because a structural precondition does not hold. They are not bugs
/// and the CLI maps them to a distinct exit status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not Metzler: entry {value:e} at ({row}, {col})")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("matrix has a negative entry {value:e} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("F is identically zero")]
    ZeroInfection,

    #[error("power iteration failed after {iterations} iterations (last estimate {estimate})")]
    PowerIterationFailed { iterations: usize, estimate: f64 },

    #[error("operator is not self-adjoint (asymmetry {asymmetry:e})")]
    NotSelfAdjoint { asymmetry: f64 },

    #[error("CW characterization not guaranteed: {0}")]
    IrreducibilityRefused(String),

    #[error("test vector is not strictly positive at index {index}")]
    NonPositiveTestVector { index: usize },

    #[error("test function inadmissible at node {node} (species {species})")]
    InadmissibleTestFunction { node: usize, species: usize },

    #[error("no mu0 exists: s(L_inf) = {bound} is not negative")]
    NoMu0 { bound: f64 },

    #[error("next-generation undefined: s(L_inf) = {bound} is not negative")]
    NextGenerationUndefined { bound: f64 },

    #[error("next-generation entry {value:e} at ({row}, {col}) is below -1e-10")]
    NegativeNextGeneration { row: usize, col: usize, value: f64 },

    #[error("singular solve")]
    Singular,

    #[error("mu0 out of range: bracket expansion passed 2^60")]
    Mu0OutOfRange,

    #[error("degenerate set is empty")]
    EmptyZeroSet,

    #[error("dt too large: density {value:e} at node {node}")]
    DtTooLarge { node: usize, value: f64 },

    #[error("table parse error at line {line}: {reason}")]
    Table { line: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True for solver refusals: a precondition of the underlying theory
    /// fails rather than the computation itself.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::ZeroInfection
                | Error::NotSelfAdjoint { .. }
                | Error::IrreducibilityRefused(_)
                | Error::NoMu0 { .. }
                | Error::NextGenerationUndefined { .. }
                | Error::Mu0OutOfRange
                | Error::EmptyZeroSet
                | Error::InadmissibleTestFunction { .. }
        )
    }

    /// Short machine-readable tag for structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid-grid",
            Error::InvalidKernel(_) => "invalid-kernel",
            Error::InvalidField(_) => "invalid-field",
            Error::SizeMismatch(_) => "size-mismatch",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::NotMetzler { .. } => "not-metzler",
            Error::NegativeEntry { .. } => "negative-entry",
            Error::ZeroInfection => "zero-infection",
            Error::PowerIterationFailed { .. } => "power-iteration-failed",
            Error::NotSelfAdjoint { .. } => "not-self-adjoint",
            Error::IrreducibilityRefused(_) => "irreducibility",
            Error::NonPositiveTestVector { .. } => "non-positive-test-vector",
            Error::InadmissibleTestFunction { .. } => "inadmissible-test-function",
            Error::NoMu0 { .. } => "no-mu0",
            Error::NextGenerationUndefined { .. } => "next-generation-undefined",
            Error::NegativeNextGeneration { .. } => "negative-next-generation",
            Error::Singular => "singular",
            Error::Mu0OutOfRange => "mu0-out-of-range",
            Error::EmptyZeroSet => "empty-zero-set",
            Error::DtTooLarge { .. } => "dt-too-large",
            Error::Table { .. } => "table",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
