use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::DMatrix;

use super::config::TokenMode;
use crate::corpus::{Token, Walk};
use crate::csvfmt::sig9;
use crate::error::{Error, Result};

/// Vocabulary entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VocabKey {
    Pair(Token),
    State(usize),
}

impl VocabKey {
    pub fn of(token: Token, mode: TokenMode) -> Self {
        match mode {
            TokenMode::StateAction => VocabKey::Pair(token),
            TokenMode::State => VocabKey::State(token.state),
        }
    }

    pub fn state(self) -> usize {
        match self {
            VocabKey::Pair(t) => t.state,
            VocabKey::State(s) => s,
        }
    }

    pub fn action(self) -> Option<usize> {
        match self {
            VocabKey::Pair(t) => Some(t.action),
            VocabKey::State(_) => None,
        }
    }
}

/// Corpus tokens in sorted key order with their frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    pub keys: Vec<VocabKey>,
    pub counts: Vec<u64>,
}

impl Vocab {
    pub fn from_walks(walks: &[Walk], mode: TokenMode) -> Self {
        let mut counts = BTreeMap::new();
        for t in walks.iter().flat_map(|w| &w.tokens) {
            *counts.entry(VocabKey::of(*t, mode)).or_insert(0u64) += 1;
        }
        Vocab {
            keys: counts.keys().copied().collect(),
            counts: counts.values().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Learned input and output vectors, one row per vocabulary entry.
/// Downstream features use the input vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    mode: TokenMode,
    keys: Vec<VocabKey>,
    index: HashMap<VocabKey, usize>,
    pub(crate) input: Vec<f64>,
    pub(crate) output: Vec<f64>,
}

impl EmbeddingTable {
    pub(crate) fn new(
        dim: usize,
        mode: TokenMode,
        keys: Vec<VocabKey>,
        input: Vec<f64>,
        output: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(input.len(), keys.len() * dim);
        debug_assert_eq!(output.len(), keys.len() * dim);
        let index = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        EmbeddingTable {
            dim,
            mode,
            keys,
            index,
            input,
            output,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token_mode(&self) -> TokenMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[VocabKey] {
        &self.keys
    }

    pub fn row_of(&self, key: VocabKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn input_row(&self, row: usize) -> &[f64] {
        &self.input[row * self.dim..(row + 1) * self.dim]
    }

    pub fn output_row(&self, row: usize) -> &[f64] {
        &self.output[row * self.dim..(row + 1) * self.dim]
    }

    /// Input vector of `key`, if it was seen in the corpus.
    pub fn input_vector(&self, key: VocabKey) -> Option<&[f64]> {
        self.row_of(key).map(|r| self.input_row(r))
    }

    /// Input vector of `(state, action)` in state-action mode, or of `state`
    /// in state mode.
    pub fn token_vector(&self, state: usize, action: usize) -> Option<&[f64]> {
        self.input_vector(VocabKey::of(Token { state, action }, self.mode))
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|v| v.is_finite())
    }

    /// CSV of the input vectors with header `token,state,action,v0..v{d−1}`.
    /// `action` is empty in state-token mode.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let cols: Vec<String> = (0..self.dim).map(|k| format!("v{k}")).collect();
        writeln!(out, "token,state,action,{}", cols.join(","))?;
        for (row, key) in self.keys.iter().enumerate() {
            let action = key.action().map(|a| a.to_string()).unwrap_or_default();
            let values: Vec<String> = self.input_row(row).iter().map(|&v| sig9(v)).collect();
            writeln!(out, "{row},{},{action},{}", key.state(), values.join(","))?;
        }
        Ok(())
    }

    /// Reads a table written by [`EmbeddingTable::write_csv`]. Output vectors
    /// are not stored in the file and come back as zeros.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::input("embedding file is empty"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[..3] != ["token", "state", "action"] {
            return Err(Error::input(
                "embedding header must start with token,state,action",
            ));
        }
        let dim = cols.len() - 3;
        for (k, c) in cols[3..].iter().enumerate() {
            if *c != format!("v{k}") {
                return Err(Error::input(format!("unexpected embedding column {c:?}")));
            }
        }
        let mut keys = Vec::new();
        let mut input = Vec::new();
        let mut mode = None;
        for (n, line) in lines.enumerate() {
            let line_err = |msg: &str| Error::input(format!("embedding line {}: {msg}", n + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(line_err("wrong number of fields"));
            }
            let state: usize = fields[1].parse().map_err(|_| line_err("bad state"))?;
            let key = if fields[2].is_empty() {
                VocabKey::State(state)
            } else {
                let action = fields[2].parse().map_err(|_| line_err("bad action"))?;
                VocabKey::Pair(Token { state, action })
            };
            let this_mode = match key {
                VocabKey::Pair(_) => TokenMode::StateAction,
                VocabKey::State(_) => TokenMode::State,
            };
            if *mode.get_or_insert(this_mode) != this_mode {
                return Err(line_err("mixes state and state-action tokens"));
            }
            if fields[0].parse::<usize>().ok() != Some(keys.len()) {
                return Err(line_err("token ids must be consecutive from 0"));
            }
            keys.push(key);
            for f in &fields[3..] {
                let v: f64 = f.parse().map_err(|_| line_err("bad vector entry"))?;
                if !v.is_finite() {
                    return Err(line_err("non-finite vector entry"));
                }
                input.push(v);
            }
        }
        let output = vec![0.0; input.len()];
        Ok(EmbeddingTable::new(
            dim,
            mode.unwrap_or(TokenMode::StateAction),
            keys,
            input,
            output,
        ))
    }
}

/// Per-state vectors for `states`: the mean input vector over the actions of
/// each state seen in the corpus (the state's own vector in state-token mode).
pub fn state_vectors(
    table: &EmbeddingTable,
    states: &[usize],
    n_actions: usize,
) -> Result<DMatrix<f64>> {
    let d = table.dim();
    let mut out = DMatrix::zeros(states.len(), d);
    for (i, &s) in states.iter().enumerate() {
        let rows: Vec<&[f64]> = match table.token_mode() {
            TokenMode::State => table.input_vector(VocabKey::State(s)).into_iter().collect(),
            TokenMode::StateAction => (0..n_actions)
                .filter_map(|a| table.token_vector(s, a))
                .collect(),
        };
        if rows.is_empty() {
            return Err(Error::MissingFeature {
                state: s,
                action: 0,
            });
        }
        for row in &rows {
            for k in 0..d {
                out[(i, k)] += row[k];
            }
        }
        for k in 0..d {
            out[(i, k)] /= rows.len() as f64;
        }
    }
    Ok(out)
}
