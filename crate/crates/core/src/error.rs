use alloc::string::String;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("missing value for {ticker} on {date}")]
    MissingValue { ticker: String, date: NaiveDate },

    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: NaiveDate,
        price: f64,
    },

    #[error("dates are not strictly increasing at {0}")]
    UnsortedDates(NaiveDate),

    #[error("series have no dates in common")]
    EmptyIntersection,

    #[error("zero variance for {ticker} in window ending {date}")]
    DegenerateWindow { ticker: String, date: NaiveDate },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("eigen-solver did not converge: {0}")]
    EigenNonConvergence(String),

    #[error("non-positive state-dependent noise scale at {date}")]
    NonPositiveNoise { date: NaiveDate },

    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),

    #[error("nested model log likelihood {full} is below restricted {nested}")]
    NestingViolation { nested: f64, full: f64 },

    #[error("samples differ between fits")]
    SampleMismatch,

    #[error("autoregression is not stationary")]
    NonStationary,

    #[error("too many surrogate fits failed: {failed} of {count}")]
    SurrogateFailures { failed: usize, count: usize },

    #[error("transition matrix has no real principal logarithm")]
    NoRealLogarithm,

    #[error("recovered diffusion matrix is not positive semidefinite (min eigenvalue {0})")]
    InconsistentDiffusion(f64),

    #[error("field coordinate does not relax (theta_v = {0})")]
    NonRelaxingField(f64),

    #[error("unstable drift matrix")]
    Unstable,

    #[error("simulation exploded at step {0}")]
    Explosive(usize),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("group {0} is empty")]
    EmptyGroup(&'static str),

    #[error("split {split}: {side} side has {got} observations, need at least {needed}")]
    SplitTooSmall {
        split: NaiveDate,
        side: &'static str,
        got: usize,
        needed: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}
