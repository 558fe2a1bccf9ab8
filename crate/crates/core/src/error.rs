use thiserror::Error;

/// Errors raised across ingestion, evaluation, fitting and testing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bounds error: time1 = {time1} exceeds time2 = {time2}")]
    Bounds { time1: f64, time2: f64 },

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("unknown event code {0} (expected 0, 1, 2 or 3)")]
    Code(i64),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset is empty or has zero total weight")]
    EmptyDataset,

    #[error("record {index} straddles threshold {thresh}: cannot decide whether a censored observation is an exceedance")]
    AmbiguousExceedance { index: usize, thresh: f64 },

    #[error("invalid threshold: {0}")]
    Threshold(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("no exceedances above threshold {0}")]
    NoExceedances(f64),

    #[error("optimization failed to converge from every starting value: {0}")]
    NonConvergence(String),

    #[error("observed information matrix is singular or not positive definite")]
    SingularInformation,

    #[error("no admissible Turnbull intervals: the data are inconsistent")]
    EmptyIntervalSet,

    #[error("EM reached {0} iterations without satisfying the optimality conditions")]
    MaxIter(usize),

    #[error("comparison of {sub} against {sup} is not permitted: {reason}")]
    ForbiddenComparison {
        sub: String,
        sup: String,
        reason: String,
    },

    #[error("{0} and {1} are not nested")]
    NotNested(String, String),

    #[error("the larger model {sup} has a lower log likelihood ({ll_sup}) than the nested model {sub} ({ll_sub}); refit with other starting values")]
    OptimizationOrder {
        sub: String,
        sup: String,
        ll_sub: f64,
        ll_sup: f64,
    },

    #[error("stratum '{0}' has no exceedances")]
    EmptyStratum(String),

    #[error("profile grid too narrow: the maximum lies at the {0} edge of the grid")]
    GridTooNarrow(&'static str),

    #[error("truncation window has negligible probability ({0:e})")]
    ZeroMass(f64),

    #[error("no uncensored observations to display")]
    NoObservedFailures,

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for errors caused by the inputs rather than by numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonConvergence(_)
                | Error::SingularInformation
                | Error::MaxIter(_)
                | Error::OptimizationOrder { .. }
                | Error::GridTooNarrow(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
