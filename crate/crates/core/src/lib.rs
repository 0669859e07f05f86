//! Off-policy state embeddings for fast value-function fitting on tabular MDPs.
//!
//! The pipeline has two phases over a family of tasks that share dynamics:
//!
//! 1. **Meta-training** ([`corpus`], [`embed`]): collect reward-agnostic random
//!    walks and fit skip-gram embeddings of `(state, action)` tokens in which
//!    each context is weighted by `γ^(distance − 1)`.
//! 2. **Meta-testing** ([`metatest`]): for each task, fit a linear Q-function
//!    over the frozen embeddings with least-squares policy iteration.
//!
//! [`oracle`] provides exact dynamic-programming and successor-representation
//! ground truth, [`fourrooms`] the benchmark environment and [`bench`] the
//! experiment harness.

pub mod bench;
pub mod corpus;
pub mod csvfmt;
pub mod embed;
pub mod error;
pub mod fourrooms;
pub mod mdp;
pub mod metatest;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
