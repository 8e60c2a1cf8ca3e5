use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: String, found: String },

    #[error("nonzero mean {mean:?} exceeds tolerance {tol:e}")]
    NonzeroMean { mean: Vec<f64>, tol: f64 },

    #[error("mollifier scale {l:e} is not above the grid step {h:e}")]
    UnresolvedMollifier { l: f64, h: f64 },

    #[error("time {t} outside series range [{t0}, {t1}]")]
    TimeOutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("mikado placement failed: best minimum line distance {best:.6} <= 2r = {needed:.6}")]
    PlacementFailure { best: f64, needed: f64 },

    #[error("mikado admissibility violated at t = {t:.6}, window {window}: |R - Id| = {deviation:.6} > {radius:.6}")]
    Admissibility {
        t: f64,
        window: i64,
        deviation: f64,
        radius: f64,
    },

    #[error("energy gap rho_q = {value:e} <= 0 at t = {t:.6}")]
    EnergyGap { t: f64, value: f64 },

    #[error("solver blow-up at t = {t:.6}: sup|v| = {sup:e}")]
    BlowUp { t: f64, sup: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// True for the two declared pipeline gates.
    pub fn is_gate(&self) -> bool {
        matches!(self, Error::Admissibility { .. } | Error::EnergyGap { .. })
    }
}
