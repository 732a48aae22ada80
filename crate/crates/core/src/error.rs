use thiserror::Error;

/// Errors produced by estimators, diagnostics, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input vectors have mismatched lengths ({field}: expected {expected}, found {found})")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("summary data must contain at least one SNP")]
    EmptyData,

    #[error("standard error at index {0} is not a positive finite number")]
    NonPositiveStdErr(usize),

    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),

    #[error("duplicate SNP id `{0}`")]
    DuplicateSnpId(String),

    #[error("{method} requires at least {required} SNPs, got {actual}")]
    TooFewSnps {
        method: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("score function has no finite root in the search bracket")]
    NoFiniteRoot,

    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("estimating equations have well-separated roots at beta = {0:?}; no root selected")]
    MultipleRootsAmbiguous(Vec<f64>),

    #[error("degenerate variance estimate: {0}")]
    DegenerateVariance(String),

    #[error("average instrument strength must be positive, got {0}")]
    NonPositiveKappa(f64),

    #[error("tuning constant must be positive, got {0}")]
    NonPositiveTuningConstant(f64),

    #[error("quadrature did not reach the requested tolerance ({0})")]
    QuadratureNonConvergence(String),

    #[error("all regression weights are degenerate")]
    AllWeightsDegenerate,

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("{0} SNPs have zero exposure effect; too few defined Wald ratios remain")]
    ZeroGammaHat(usize),

    #[error("diagnostic is not defined for fits of method {0}")]
    MethodMismatch(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    ParseError {
        line: u64,
        column: String,
        message: String,
    },

    #[error("invalid simulation setup: {0}")]
    InvalidSetup(String),

    #[error("empty diagnostics; nothing to emit")]
    EmptyDiagnostics,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
