use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NormNotConverged { iterations: usize, estimate: f64 },

    #[error("step scale s = {s} is not admissible: s * ||F|| = {product} must be < 1")]
    Inadmissible { s: f64, product: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("iteration {k} precedes the schedule start k = {k_start}")]
    BeforeScheduleStart { k: u64, k_start: u64 },

    #[error("the `{0}` oracle is not available; supply it on the problem's convex terms")]
    MissingOracle(&'static str),

    #[error("the {0} prox oracle returned non-finite values")]
    ProxFailure(&'static str),

    #[error("no descent lemma or rate theorem applies to the {0} regime on this problem")]
    NoMatchingLemma(String),

    #[error("regime mismatch: trajectory ran under {trajectory}, check requested {requested}")]
    RegimeMismatch { trajectory: String, requested: String },

    #[error("missing theorem constant `{0}`")]
    MissingConstant(&'static str),

    #[error("linear system is singular: {0}")]
    Singular(&'static str),

    #[error("Newton solve stalled at residual {residual}")]
    NewtonFailed { residual: f64 },

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("reference saddle could not be certified (residual {residual})")]
    ReferenceNotCertified { residual: f64 },
}
