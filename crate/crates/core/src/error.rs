use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain the formula is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration was requested above its size cap.
    #[error(
        "{what} of size {size} exceeds the enumeration cap {cap}; use the concentration bounds"
    )]
    TooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    /// A cluster decision is deterministic, so its fusion weights diverge.
    #[error("degenerate cluster quality (p_fa_c = {p_fa}, p_md_c = {p_md}): fusion weights are undefined")]
    DegenerateWeights { p_fa: f64, p_md: f64 },

    /// The summed variables have zero variance; the tail is an indicator, not a bound.
    #[error("degenerate variance: the bounded sum is deterministic")]
    DegenerateVariance,

    #[error("{clusters} clusters do not divide {sensors} sensors evenly")]
    Divisibility { sensors: usize, clusters: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
