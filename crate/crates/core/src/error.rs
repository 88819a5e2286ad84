//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data was malformed (non-finite entries, bad shapes, bad ranges).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Matrix shape is outside what an operation supports (e.g. square full-rank paths).
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    /// A randomized path search exhausted its retries.
    #[error("path not found after {retries} retries (best min singular value {best_floor:.3e}, floor {floor:.3e})")]
    PathNotFound {
        retries: usize,
        best_floor: f64,
        floor: f64,
    },

    /// A matrix that must have full rank (or a spanning basis) does not.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// The activation lacks the property the operation requires.
    #[error("unsupported activation: {0}")]
    UnsupportedActivation(String),

    /// A theorem hypothesis failed; carries the first failing clause verbatim.
    #[error("hypothesis failed: {clause}{detail}")]
    HypothesisFailed { clause: String, detail: String },

    /// Bias search ran out of budget before reaching the required rank.
    #[error("rank search failed: achieved rank {achieved} of {needed} within budget {budget}")]
    SearchFailure {
        achieved: usize,
        needed: usize,
        budget: usize,
    },

    /// Generic-position nudging could not break a degeneracy.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// Two path pieces do not share an endpoint.
    #[error("path discontinuity: endpoint gap {gap:.3e} exceeds {tol:.1e}")]
    Discontinuity { gap: f64, tol: f64 },

    /// Loss target matrix cannot be built (e.g. non-one-hot labels for cross-entropy).
    #[error("invalid target: {0}")]
    InvalidTarget(String),

    /// Requested epsilon is not above the loss infimum.
    #[error("invalid epsilon: {0}")]
    InvalidEpsilon(String),

    /// Parameters do not match the architecture.
    #[error("invalid params: {0}")]
    InvalidParams(String),

    /// Something the constructions guarantee internally did not hold.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
