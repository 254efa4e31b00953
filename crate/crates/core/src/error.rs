//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ensemble must contain at least one agent")]
    EmptyEnsemble,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("weight table has {len} entries but {needed} agents need ranks 0..{needed}")]
    WeightTableTooShort { len: usize, needed: usize },
    #[error("weight normalizer is zero (all weights vanish)")]
    ZeroNormalizer,
    #[error("{op} requires a {expected} weight function")]
    UnsupportedWeightMode { op: &'static str, expected: &'static str },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("consensus certificate is invalid (kernel dimension {kernel_dim}); no unique prediction")]
    InvalidCertificate { kernel_dim: usize },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("switch count exceeded {limit} events at t = {t}; topology is chattering")]
    Chattering { limit: usize, t: f64 },
    #[error("root bracket [{lo}, {hi}] does not enclose a sign change")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("measures must have equal point counts and uniform equal masses (got {left} vs {right})")]
    UnequalClouds { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
