//! Construct, verify, and export continuous parameter-space paths for
//! over-parameterized fully connected networks: loss-invariant
//! reparameterization curves, rank-repair curves, descent paths to
//! near-infimal loss, and paths connecting any two points of a sublevel set.

// Negated float comparisons are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod constructions;
pub mod error;
pub mod linalg;
pub mod network;
pub mod pathkit;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Matrix;
