//! Simulator for keeping an edge-hosted twin classifier accurate and
//! synchronized while its environment drifts between episodes.
//!
//! A physical process is mirrored by a small neural model ("the twin") that
//! must be retrained at every episode boundary. Retraining takes the twin
//! out of service, so each episode poses a tradeoff: train longer for a
//! better model, or stop early to restore synchronization. This crate
//! provides the pieces of that study:
//!
//! - [`nn`] — a from-scratch MLP with analytic gradients and full-batch
//!   gradient descent, bitwise deterministic under a seed.
//! - [`episodes`] — episodically non-stationary data: per-episode pixel
//!   permutations over a base dataset (IDX files or a synthetic generator).
//! - [`strategies`] — the four update strategies: exhaustive replay,
//!   single-task, EWC with per-episode Fisher anchors, and EWC++ with a
//!   moving-average Fisher.
//! - [`sync`] — the de-synchronization time model and the scalarized
//!   accuracy/out-of-service objective that selects the iteration count.
//! - [`harness`] — multi-episode experiment driver, retention metrics, and
//!   CSV/JSON emission.
//!
//! The `twinsync` CLI (its own crate) fronts the harness; the `book/`
//! directory holds a guide whose code snippets compile as doc-tests of this
//! crate.

pub mod episodes;
pub mod error;
pub mod harness;
pub mod nn;
pub mod seeding;
pub mod strategies;
pub mod sync;

pub use error::{Error, ErrorCategory, Result};

// The guide's code blocks double as doc-tests so the book can never drift
// from the library API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/episodes.md")]
    mod episodes {}
    #[doc = include_str!("../../../book/src/strategies.md")]
    mod strategies {}
    #[doc = include_str!("../../../book/src/synchronization.md")]
    mod synchronization {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
