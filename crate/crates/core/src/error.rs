use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty distribution: at least one atom is required")]
    EmptyDistribution,
    #[error("all weights are zero")]
    ZeroMass,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("negative weight {weight} at location {location}")]
    NegativeWeight { location: f64, weight: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("support [{lo}, {hi}] is not covered by grid [{grid_lo}, {grid_hi}]")]
    GridCoverage {
        lo: f64,
        hi: f64,
        grid_lo: f64,
        grid_hi: f64,
    },
    #[error("support bound violated: location {location} outside [{lo}, {hi}]")]
    SupportBound { location: f64, lo: f64, hi: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("backend mismatch: {0}")]
    Backend(String),
    #[error("not in the range of the spectral transport: {0}")]
    NotInRange(String),
    #[error("singular linear system")]
    Singular,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
