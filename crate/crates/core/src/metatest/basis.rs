use nalgebra::{DMatrix, DVector};

use crate::corpus::Token;
use crate::embed::{EmbeddingTable, Mode, TokenMode, VocabKey};
use crate::error::{Error, Result};
use crate::mdp::Policy;
use crate::oracle::{argmax_lowest, SuccessorMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    State2vec,
    Node2vec,
    Onehot,
    ExactSr,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::State2vec => "state2vec",
            FeatureKind::Node2vec => "node2vec",
            FeatureKind::Onehot => "onehot",
            FeatureKind::ExactSr => "exact-sr",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "state2vec" => Ok(FeatureKind::State2vec),
            "node2vec" => Ok(FeatureKind::Node2vec),
            "onehot" | "onehot-tabular" => Ok(FeatureKind::Onehot),
            "exact-sr" | "exact-sr-rows" => Ok(FeatureKind::ExactSr),
            other => Err(Error::input(format!("unknown method {other:?}"))),
        }
    }

    /// The embedding mode behind a learned basis.
    pub fn embed_mode(self) -> Option<Mode> {
        match self {
            FeatureKind::State2vec => Some(Mode::State2vec),
            FeatureKind::Node2vec => Some(Mode::Node2vec),
            _ => None,
        }
    }
}

/// What to do with `(s, a)` pairs the embedding has no vector for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Missing {
    /// Report [`Error::MissingFeature`] when such a pair is needed.
    #[default]
    Error,
    /// Use the zero vector.
    Zero,
}

/// Linear features `φ(s, a)` for a fixed `|S|×|A|` space, one dense row per
/// pair (row `s·|A| + a`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBasis {
    kind: FeatureKind,
    n_states: usize,
    n_actions: usize,
    rows: DMatrix<f64>,
    present: Vec<bool>,
    nonzero: Vec<Vec<usize>>,
}

impl FeatureBasis {
    fn from_rows(
        kind: FeatureKind,
        n_states: usize,
        n_actions: usize,
        rows: DMatrix<f64>,
        present: Vec<bool>,
    ) -> Self {
        let nonzero = rows
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        FeatureBasis {
            kind,
            n_states,
            n_actions,
            rows,
            present,
            nonzero,
        }
    }

    pub fn onehot(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        Self::from_rows(
            FeatureKind::Onehot,
            n_states,
            n_actions,
            DMatrix::identity(n, n),
            vec![true; n],
        )
    }

    /// Rows of a successor matrix, `D = |S|`.
    pub fn exact_sr(sr: &SuccessorMatrix) -> Self {
        let n = sr.n_states() * sr.n_actions();
        Self::from_rows(
            FeatureKind::ExactSr,
            sr.n_states(),
            sr.n_actions(),
            sr.values().clone(),
            vec![true; n],
        )
    }

    /// Input vectors of `table`. In state-token mode the state vector is
    /// placed in block `a` of a `d·|A|` vector.
    pub fn from_embeddings(
        kind: FeatureKind,
        table: &EmbeddingTable,
        n_states: usize,
        n_actions: usize,
        missing: Missing,
    ) -> Result<Self> {
        if kind.embed_mode().is_none() {
            return Err(Error::input(format!(
                "{} is not an embedding basis",
                kind.name()
            )));
        }
        let d = table.dim();
        let width = match table.token_mode() {
            TokenMode::StateAction => d,
            TokenMode::State => d * n_actions,
        };
        let mut rows = DMatrix::zeros(n_states * n_actions, width);
        let mut present = vec![false; n_states * n_actions];
        for s in 0..n_states {
            for a in 0..n_actions {
                let (key, offset) = match table.token_mode() {
                    TokenMode::StateAction => (
                        VocabKey::Pair(Token {
                            state: s,
                            action: a,
                        }),
                        0,
                    ),
                    TokenMode::State => (VocabKey::State(s), a * d),
                };
                if let Some(v) = table.input_vector(key) {
                    let i = s * n_actions + a;
                    present[i] = true;
                    for k in 0..d {
                        rows[(i, offset + k)] = v[k];
                    }
                }
            }
        }
        if missing == Missing::Zero {
            present.fill(true);
        }
        Ok(Self::from_rows(kind, n_states, n_actions, rows, present))
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn has(&self, s: usize, a: usize) -> bool {
        self.present[s * self.n_actions + a]
    }

    pub fn basis(&self, s: usize, a: usize) -> Result<DVector<f64>> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::input(format!("pair ({s}, {a}) out of range")));
        }
        self.check(s, a)?;
        Ok(self.rows.row(s * self.n_actions + a).transpose())
    }

    pub(crate) fn check(&self, s: usize, a: usize) -> Result<()> {
        if self.has(s, a) {
            Ok(())
        } else {
            Err(Error::MissingFeature {
                state: s,
                action: a,
            })
        }
    }

    pub(crate) fn nonzero(&self, s: usize, a: usize) -> &[usize] {
        &self.nonzero[s * self.n_actions + a]
    }

    pub(crate) fn value(&self, s: usize, a: usize, k: usize) -> f64 {
        self.rows[(s * self.n_actions + a, k)]
    }

    /// `φ(s, a)ᵀθ` for every pair, `None` where the feature is missing.
    pub fn q_values(&self, theta: &DVector<f64>) -> Vec<Option<f64>> {
        let q = &self.rows * theta;
        q.iter()
            .zip(&self.present)
            .map(|(v, p)| p.then_some(*v))
            .collect()
    }
}

/// Greedy policy `argmax_a φ(s, a)ᵀθ` with ties to the lowest action id.
/// Actions without features are skipped; a state with none takes action 0.
pub fn greedy(theta: &DVector<f64>, fb: &FeatureBasis) -> Result<Policy> {
    Policy::deterministic(fb.n_actions(), &greedy_actions(theta, fb)?)
}

pub fn greedy_actions(theta: &DVector<f64>, fb: &FeatureBasis) -> Result<Vec<usize>> {
    if theta.len() != fb.dim() {
        return Err(Error::input(format!(
            "theta has length {}, basis has dimension {}",
            theta.len(),
            fb.dim()
        )));
    }
    let q = fb.q_values(theta);
    let n_a = fb.n_actions();
    Ok((0..fb.n_states())
        .map(|s| {
            let row = &q[s * n_a..(s + 1) * n_a];
            if row.iter().all(Option::is_none) {
                return 0;
            }
            argmax_lowest(row.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)))
        })
        .collect())
}
