use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("attribute component {0} outside [1,100]")]
    OutOfRange(i64),
    #[error("agent description has {0} tuples, fewer than 3")]
    TooShort(usize),
    #[error("agent description has {0} tuples, more than 6")]
    TooLong(usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("site {site} outside 1..={ell_v}")]
    SiteOutOfRange { site: usize, ell_v: usize },
    #[error("population has no site with enough samples (ell_V = 0)")]
    DegeneratePopulation,
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("probabilities sum to {0}, not 1")]
    NotADistribution(f64),
    #[error("bin count mismatch: {observed} observed vs {expected} expected")]
    BinMismatch { observed: usize, expected: usize },
    #[error("input has {got} values, network expects {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("unknown habitat {0}")]
    UnknownHabitat(u32),
    #[error("habitat {0} has an empty pool")]
    EmptyPool(u32),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
