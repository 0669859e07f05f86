//! Per-task fitting of a linear `Q̂(s, a) = φ(s, a)ᵀθ` over fixed features.
//!
//! Features come from a trained embedding, a one-hot table, or exact
//! successor rows. `θ` is fitted by LSTDQ/LSPI from a small batch of
//! exploratory transitions; the features themselves are never modified.

mod basis;
mod lspi;

pub use basis::{greedy, greedy_actions, FeatureBasis, FeatureKind, Missing};
pub use lspi::{
    collect_samples, episode_returns, evaluate, lspi, lstdq, write_policy, write_theta, Holdout,
    LspiConfig, LspiSolution, SampleSet,
};

#[cfg(test)]
mod tests;
