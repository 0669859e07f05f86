//! Reward-agnostic random walks and the discounted `(center, context)` pairs
//! extracted from them.
//!
//! Walks never see a task: they run on the shared dynamics with no absorbing
//! states, so the same corpus serves every task in the family.
//!
//! A context `j` positions after its center is weighted `γ^(j−1)`; the
//! immediate successor carries full weight.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::rng;

/// A `(state, action)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    pub state: usize,
    pub action: usize,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.state, self.action)
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (state, action) = s
            .split_once(':')
            .ok_or_else(|| Error::input(format!("token {s:?} is not of the form state:action")))?;
        let parse = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::input(format!("token {s:?} has a non-integer field")))
        };
        Ok(Token {
            state: parse(state)?,
            action: parse(action)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub tokens: Vec<Token>,
}

impl Walk {
    /// True when every step `k → k+1` has positive probability under `mdp`.
    pub fn is_consistent(&self, mdp: &TabularMdp) -> bool {
        self.tokens.windows(2).all(|w| {
            w[0].state < mdp.n_states()
                && w[0].action < mdp.n_actions()
                && w[1].state < mdp.n_states()
                && mdp.prob(w[0].state, w[0].action, w[1].state) > 0.0
        })
    }
}

/// Walk budget and start distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    pub n_walks: usize,
    pub walk_len: usize,
    /// Walks start uniformly over these states.
    pub start_states: Vec<usize>,
    /// When set, a walk stops right after entering a flagged state. Off by
    /// default; meta-training walks know nothing about goals.
    pub stop_at: Option<Vec<bool>>,
}

impl WalkConfig {
    pub fn new(n_walks: usize, walk_len: usize, start_states: Vec<usize>) -> Self {
        WalkConfig {
            n_walks,
            walk_len,
            start_states,
            stop_at: None,
        }
    }
}

/// Collects `cfg.n_walks` walks under `behavior`. Walk `i` draws from its own
/// stream of `seed`, so the output does not depend on thread scheduling.
pub fn collect_walks(
    mdp: &TabularMdp,
    behavior: &Policy,
    cfg: &WalkConfig,
    seed: u64,
) -> Result<Vec<Walk>> {
    if cfg.walk_len < 2 {
        return Err(Error::input("walk_len must be at least 2"));
    }
    if cfg.start_states.is_empty() {
        return Err(Error::input("no start states"));
    }
    if let Some(&s) = cfg.start_states.iter().find(|&&s| s >= mdp.n_states()) {
        return Err(Error::input(format!("start state {s} out of range")));
    }
    behavior.check_shape(mdp)?;
    let walks = (0..cfg.n_walks)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, rng::streams::WALKS + i as u64);
            let mut state = cfg.start_states[rng.random_range(0..cfg.start_states.len())];
            let mut tokens = Vec::with_capacity(cfg.walk_len);
            for k in 0..cfg.walk_len {
                let action = behavior.sample(state, &mut rng);
                tokens.push(Token { state, action });
                if k + 1 == cfg.walk_len {
                    break;
                }
                if cfg.stop_at.as_ref().is_some_and(|stop| stop[state]) {
                    break;
                }
                state = mdp.sample_unchecked(state, action, &mut rng);
            }
            Walk { tokens }
        })
        .collect();
    Ok(walks)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContextPair {
    pub center: Token,
    pub context: Token,
    pub weight: f64,
}

/// `(i, j)` walk positions of every pair with `i < j ≤ i + window`.
pub fn pair_positions(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |i| (i + 1..len.min(i + window + 1)).map(move |j| (i, j)))
}

/// Forward-only context pairs of one walk with weights `γ^(j−i−1)`.
pub fn context_pairs(walk: &Walk, window: usize, discount: f64) -> Result<Vec<ContextPair>> {
    if window == 0 {
        return Err(Error::input("window must be at least 1"));
    }
    let weights = distance_weights(window, discount);
    Ok(pair_positions(walk.tokens.len(), window)
        .map(|(i, j)| ContextPair {
            center: walk.tokens[i],
            context: walk.tokens[j],
            weight: weights[j - i - 1],
        })
        .collect())
}

/// `weights[k] = γ^k` for `k < window`, the weight of a context `k + 1` steps ahead.
pub fn distance_weights(window: usize, discount: f64) -> Vec<f64> {
    (0..window).map(|k| discount.powi(k as i32)).collect()
}

/// Writes one walk per line, tokens as `state:action` separated by spaces.
pub fn write_walks(walks: &[Walk], mut out: impl Write) -> std::io::Result<()> {
    for walk in walks {
        let line: Vec<String> = walk.tokens.iter().map(Token::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Inverse of [`write_walks`]. Blank lines are skipped.
pub fn parse_walks(text: &str) -> Result<Vec<Walk>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let tokens = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<Vec<Token>>>()
                .map_err(|e| e.context(format!("corpus line {}", n + 1)))?;
            Ok(Walk { tokens })
        })
        .collect()
}
