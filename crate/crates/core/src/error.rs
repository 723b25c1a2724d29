use alloc::string::String;

/// Errors raised by the allocation, estimation and design routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("column `{0}` not found in frame")]
    MissingColumn(String),
    #[error("column `{name}` has length {got}, expected {expected}")]
    ColumnLength {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("frame has not been stratified")]
    NotStratified,
    #[error("unit {0} was already sampled")]
    AlreadySampled(usize),
    #[error("stratum boundaries are frozen once sampling has started")]
    StrataFrozen,
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    #[error("allocation undefined: every stratum has N_k * sd_k = 0")]
    DegenerateAllocation,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },
    #[error("no rows available to estimate stratum {0} standard deviations")]
    EmptyStratum(usize),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
