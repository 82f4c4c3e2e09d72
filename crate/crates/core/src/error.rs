use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite CSI sample at snapshot {snapshot}, antenna {antenna}, subcarrier {subcarrier}")]
    NonFiniteSample {
        snapshot: usize,
        antenna: usize,
        subcarrier: usize,
    },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("trajectory has no fixes")]
    EmptyTrajectory,
    #[error("timestamps are not strictly increasing at row {0}")]
    NonMonotonicTimestamps(usize),
    #[error("unsupported trajectory pattern: {0}")]
    UnsupportedPattern(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("terminal coincides with the base station")]
    CoincidentPoints,
    #[error("series too short: need at least {needed}, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("mean step size is zero (hovering trajectory)")]
    ZeroMeanStep,
    #[error("window of {window} samples exceeds series of {len}")]
    WindowExceedsSeries { window: usize, len: usize },
    #[error("large-scale power is not positive at index {0}")]
    NonPositiveLsPower(usize),
    #[error("snapshot has zero power")]
    ZeroPower,
    #[error("window out of range: {0}")]
    WindowOutOfRange(String),
    #[error("correlation matrix is zero")]
    ZeroMatrix,
    #[error("need at least {needed} stationarity regions, got {got}")]
    InsufficientRegions { needed: usize, got: usize },
    #[error("power delay profile has no energy")]
    EmptyPdp,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("non-positive sample at index {0}")]
    NonPositiveSample(usize),
    #[error("moment mismatch: power fluctuation exceeds mean power")]
    MomentMismatch,
    #[error("degenerate window: zero power fluctuation")]
    DegenerateWindow,
    #[error("ill-conditioned regression: {0}")]
    IllConditioned(String),
    #[error("band too narrow: {per_band} subcarriers per band (minimum 4)")]
    BandTooNarrow { per_band: usize },
    #[error("missing pipeline stages: {}", .0.join(", "))]
    MissingStage(Vec<String>),
    #[error("unsupported report schema version {0}")]
    UnsupportedSchema(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
