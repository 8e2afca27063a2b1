use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration has {} problem(s):\n  {}", .0.len(), .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("spin configuration length {got} does not match lattice size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("system size {n} exceeds the cap of {cap} sites for {what}")]
    SizeCap { what: &'static str, n: usize, cap: usize },
    #[error("incompatible ansatz specifications: {0}")]
    Incompatible(String),
    #[error("configuration has zero weight under the ansatz (ρ_ss = 0)")]
    ZeroWeight,
    #[error("empty sample set")]
    EmptySamples,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("target out of range: {0}")]
    OutOfRange(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
