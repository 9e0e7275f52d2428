use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the model, sampler and scoring code.
///
/// Invalid inputs are always reported here; no operation encodes a failure as
/// a NaN or infinite return value.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("numeric overflow in {op}: exponent {exponent} outside [-{limit}, {limit}]", limit = crate::error::EXP_LIMIT)]
    Overflow { op: &'static str, exponent: f64 },

    #[error("non-finite log-likelihood contribution at t = {t}")]
    NonFinite { t: usize },

    #[error("particle degeneracy at t = {t}: every particle weight is zero")]
    ParticleDegeneracy { t: usize },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("zero variance of paired differences for `{0}`")]
    ZeroVariance(String),

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("chain aborted at iteration {iteration}: {source}")]
    ChainAborted {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

/// Largest exponent magnitude accepted before `exp` is considered to
/// overflow (or underflow to zero).
pub const EXP_LIMIT: f64 = 700.0;

pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        op,
        detail: detail.into(),
    }
}

/// `exp(x)` with the overflow guard applied.
pub(crate) fn checked_exp(op: &'static str, x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > EXP_LIMIT {
        return Err(Error::Overflow { op, exponent: x });
    }
    Ok(libm::exp(x))
}
