use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid request `{id}`: {message}")]
    Request { id: String, message: String },

    #[error("invalid demand distribution: {0}")]
    Distribution(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no path between `{src}` and `{dst}`")]
    Unreachable { src: String, dst: String },

    #[error("scenario space of {size} exceeds the cap of {cap}; truncate per-request supports or lower the request count")]
    ScenarioCap { size: u128, cap: u64 },

    #[error("instance too large for the brute-force oracle: {0}")]
    OracleLimit(String),

    #[error("coalition of {size} providers exceeds the combinatorial limit of {limit}")]
    CombinatorialLimit { size: usize, limit: usize },

    #[error("state space of {size} profiles exceeds the cap of {cap}")]
    StateSpaceCap { size: u64, cap: u64 },

    #[error("unknown provider `{0}`")]
    UnknownProvider(String),

    #[error("power iteration did not converge after {0} iterations")]
    NotConverged(usize),
}

impl Error {
    /// True for errors caused by malformed input rather than by the instance
    /// itself being infeasible.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Topology(_)
                | Error::Request { .. }
                | Error::Distribution(_)
                | Error::Parameter(_)
                | Error::UnknownProvider(_)
        )
    }
}
