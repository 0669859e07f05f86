use crate::error::{Error, Result};

/// Context weighting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Context `k` steps ahead weighted `γ^(k−1)`.
    State2vec,
    /// All contexts weighted 1.
    Node2vec,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::State2vec => "state2vec",
            Mode::Node2vec => "node2vec",
        }
    }
}

/// What a vocabulary entry is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenMode {
    /// One vector per `(state, action)`.
    StateAction,
    /// One vector per state; actions are dropped from the corpus.
    State,
}

impl TokenMode {
    pub fn name(self) -> &'static str {
        match self {
            TokenMode::StateAction => "state-action",
            TokenMode::State => "state",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Skip-gram with `negatives` samples from the unigram^¾ distribution.
    NegativeSampling,
    /// Full softmax over the vocabulary. Only practical for small vocabularies.
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Workers {
    /// Deterministic: same seed, same table, bit for bit.
    Single,
    /// Lock-free updates from several threads. Results vary run to run.
    Parallel(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub discount: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Floor of the linear learning-rate decay.
    pub min_learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
    pub mode: Mode,
    pub tokens: TokenMode,
    pub objective: Objective,
    pub workers: Workers,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 50,
            window: 50,
            discount: 0.8,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            negatives: 5,
            seed: 0,
            mode: Mode::State2vec,
            tokens: TokenMode::StateAction,
            objective: Objective::NegativeSampling,
            workers: Workers::Single,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::input("embedding dimension must be at least 1"));
        }
        if self.window == 0 {
            return Err(Error::input("window must be at least 1"));
        }
        if self.negatives == 0 {
            return Err(Error::input(
                "at least one negative sample per pair is required",
            ));
        }
        let gamma_ok = match self.mode {
            Mode::State2vec => self.discount > 0.0 && self.discount < 1.0,
            Mode::Node2vec => self.discount > 0.0 && self.discount <= 1.0,
        };
        if !gamma_ok {
            return Err(Error::input(format!(
                "discount {} not allowed in {} mode",
                self.discount,
                self.mode.name()
            )));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.min_learning_rate.is_nan()
            || self.min_learning_rate < 0.0
        {
            return Err(Error::input("learning rates must be positive"));
        }
        if let Workers::Parallel(0) = self.workers {
            return Err(Error::input("parallel mode needs at least one worker"));
        }
        Ok(())
    }

    /// `weights[k]` for a context `k + 1` steps ahead of its center.
    pub fn distance_weights(&self) -> Vec<f64> {
        match self.mode {
            Mode::State2vec => crate::corpus::distance_weights(self.window, self.discount),
            Mode::Node2vec => vec![1.0; self.window],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(EmbedConfig::default().validate().is_ok());
        let bad = |f: fn(&mut EmbedConfig)| {
            let mut c = EmbedConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.dim = 0));
        assert!(bad(|c| c.negatives = 0));
        assert!(bad(|c| c.discount = 1.0));
        assert!(bad(|c| c.discount = 0.0));
        let mut n2v = EmbedConfig {
            mode: Mode::Node2vec,
            discount: 1.0,
            ..EmbedConfig::default()
        };
        assert!(n2v.validate().is_ok());
        assert_eq!(n2v.distance_weights(), vec![1.0; 50]);
        n2v.discount = 1.5;
        assert!(n2v.validate().is_err());
    }
}
