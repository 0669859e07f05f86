//! Finite MDPs, reward tasks, policies and episode simulation.
//!
//! A [`TabularMdp`] holds the dynamics shared by a family of tasks. A [`Task`]
//! adds a reward table and terminal flags, and owns its own copy of the
//! dynamics in which terminal states are absorbing.
//!
//! Rewards are attached to the transition: `R(s, a)` is what the agent
//! receives for taking `a` in `s`. Environments built in this crate set it to
//! the bonus of the cell being entered.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tolerance on probability-row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    /// Dense `P[s][a][s']`, row-major.
    transition: Vec<f64>,
    /// Nonzero entries of each `(s, a)` row, for sampling.
    support: Vec<Vec<(usize, f64)>>,
}

impl TabularMdp {
    /// Builds an MDP from a dense `|S|·|A|·|S|` transition tensor.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::input(
                "an MDP needs at least one state and one action",
            ));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::input(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        check_discount(discount)?;
        let mut support = Vec::with_capacity(n_states * n_actions);
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::input(format!(
                    "row (s={}, a={}) has a negative or non-finite probability",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::input(format!(
                    "row (s={}, a={}) sums to {total}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
            support.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(j, p)| (j, *p))
                    .collect(),
            );
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            discount,
            transition,
            support,
        })
    }

    /// MDP whose every move is deterministic: `next(s, a)` is the successor.
    pub fn deterministic(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        next: impl Fn(usize, usize) -> usize,
    ) -> Result<Self> {
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let s2 = next(s, a);
                if s2 >= n_states {
                    return Err(Error::input(format!(
                        "successor {s2} of ({s}, {a}) is out of range"
                    )));
                }
                transition[(s * n_actions + a) * n_states + s2] = 1.0;
            }
        }
        Self::new(n_states, n_actions, transition, discount)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Same dynamics under another discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        check_discount(discount)?;
        Ok(TabularMdp {
            discount,
            ..self.clone()
        })
    }

    /// Copy of the dynamics where every flagged state self-loops under every action.
    pub fn with_absorbing(&self, absorbing: &[bool]) -> Self {
        let mut transition = self.transition.clone();
        let mut support = self.support.clone();
        for s in (0..self.n_states).filter(|&s| absorbing[s]) {
            for a in 0..self.n_actions {
                let idx = s * self.n_actions + a;
                let row = &mut transition[idx * self.n_states..(idx + 1) * self.n_states];
                row.fill(0.0);
                row[s] = 1.0;
                support[idx] = vec![(s, 1.0)];
            }
        }
        TabularMdp {
            transition,
            support,
            ..self.clone()
        }
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    /// The distribution `P(s, a, ·)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let idx = s * self.n_actions + a;
        &self.transition[idx * self.n_states..(idx + 1) * self.n_states]
    }

    /// Nonzero entries of `P(s, a, ·)`.
    pub fn support(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.support[s * self.n_actions + a]
    }

    pub(crate) fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::input(format!(
                "state {s} out of range (|S| = {})",
                self.n_states
            )));
        }
        if a >= self.n_actions {
            return Err(Error::input(format!(
                "action {a} out of range (|A| = {})",
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Draws `s' ~ P(s, a, ·)`.
    pub fn sample_transition(&self, s: usize, a: usize, rng: &mut Rng) -> Result<usize> {
        self.check_pair(s, a)?;
        Ok(self.sample_unchecked(s, a, rng))
    }

    pub(crate) fn sample_unchecked(&self, s: usize, a: usize, rng: &mut Rng) -> usize {
        let support = self.support(s, a);
        if let [(only, _)] = support {
            return *only;
        }
        sample_categorical(support.iter().copied(), rng)
    }

    /// State-to-state chain `P_π(s, s') = Σ_a π(a|s) P(s, a, s')`.
    pub fn state_chain(&self, policy: &Policy) -> DMatrix<f64> {
        let n = self.n_states;
        let mut chain = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                for &(s2, p) in self.support(s, a) {
                    chain[(s, s2)] += pa * p;
                }
            }
        }
        chain
    }
}

fn check_discount(discount: f64) -> Result<()> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::input(format!(
            "discount must lie in [0, 1), got {discount}"
        )));
    }
    Ok(())
}

fn sample_categorical(items: impl Iterator<Item = (usize, f64)>, rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Stochastic policy `π(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::input(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::input(format!(
                    "policy row {s} has a negative or non-finite entry"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::input(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Policy {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One-hot policy taking `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::input(format!(
                    "action {a} for state {s} out of range"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Policy {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// The chosen action per state, if every row is one-hot.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|s| {
                let row = self.row(s);
                row.iter().position(|&p| p == 1.0)
            })
            .collect()
    }

    pub fn sample(&self, s: usize, rng: &mut Rng) -> usize {
        let row = self.row(s);
        if let Some(a) = row.iter().position(|&p| p == 1.0) {
            return a;
        }
        sample_categorical(row.iter().copied().enumerate(), rng)
    }

    pub(crate) fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::input(format!(
                "policy shape {}x{} does not match MDP {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

/// One sampled step `(s, a, r, s')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    /// Whether `next_state` is terminal.
    pub terminal: bool,
}

/// Where an episode begins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    State(usize),
    /// Uniform over the task's start states.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    /// Undiscounted sum of rewards.
    pub total_reward: f64,
}

/// One reward specification over shared dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    label: String,
    reward: DMatrix<f64>,
    terminal: Vec<bool>,
    start_states: Vec<usize>,
    dynamics: TabularMdp,
}

impl Task {
    /// Pairs `reward` (an `|S|×|A|` table) and terminal flags with `mdp`.
    /// Terminal states become absorbing in the task's own copy of the dynamics.
    /// Episodes start uniformly over non-terminal states unless
    /// [`Task::with_start_states`] narrows them.
    pub fn new(
        label: impl Into<String>,
        mdp: &TabularMdp,
        reward: DMatrix<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if reward.nrows() != mdp.n_states() || reward.ncols() != mdp.n_actions() {
            return Err(Error::input(format!(
                "reward table is {}x{}, expected {}x{}",
                reward.nrows(),
                reward.ncols(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::input("reward table has non-finite entries"));
        }
        if terminal.len() != mdp.n_states() {
            return Err(Error::input("terminal flags do not cover every state"));
        }
        let start_states: Vec<usize> = (0..mdp.n_states()).filter(|&s| !terminal[s]).collect();
        if start_states.is_empty() {
            return Err(Error::input("every state is terminal"));
        }
        Ok(Task {
            label: label.into(),
            reward,
            dynamics: mdp.with_absorbing(&terminal),
            terminal,
            start_states,
        })
    }

    pub fn with_start_states(mut self, start_states: Vec<usize>) -> Result<Self> {
        if start_states.is_empty() {
            return Err(Error::input("start-state set is empty"));
        }
        if let Some(&s) = start_states
            .iter()
            .find(|&&s| s >= self.dynamics.n_states() || self.terminal[s])
        {
            return Err(Error::input(format!(
                "start state {s} is out of range or terminal"
            )));
        }
        self.start_states = start_states;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn reward(&self) -> &DMatrix<f64> {
        &self.reward
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn start_states(&self) -> &[usize] {
        &self.start_states
    }

    /// The task-paired dynamics (terminal states absorbing).
    pub fn mdp(&self) -> &TabularMdp {
        &self.dynamics
    }

    /// Takes action `a` in non-terminal state `s`.
    pub fn step(&self, s: usize, a: usize, rng: &mut Rng) -> Result<Transition> {
        self.dynamics.check_pair(s, a)?;
        if self.terminal[s] {
            return Err(Error::Usage(format!("cannot step from terminal state {s}")));
        }
        Ok(self.step_unchecked(s, a, rng))
    }

    fn step_unchecked(&self, s: usize, a: usize, rng: &mut Rng) -> Transition {
        let next_state = self.dynamics.sample_unchecked(s, a, rng);
        Transition {
            state: s,
            action: a,
            next_state,
            reward: self.reward[(s, a)],
            terminal: self.terminal[next_state],
        }
    }

    /// Rolls out `policy` until a terminal state is entered or `max_steps` elapse.
    pub fn run_episode(
        &self,
        policy: &Policy,
        max_steps: usize,
        start: Start,
        rng: &mut Rng,
    ) -> Result<Episode> {
        if max_steps == 0 {
            return Err(Error::input("max_steps must be at least 1"));
        }
        policy.check_shape(&self.dynamics)?;
        let mut s = match start {
            Start::State(s) => {
                self.dynamics.check_pair(s, 0)?;
                if self.terminal[s] {
                    return Err(Error::Usage(format!(
                        "episode cannot start in terminal state {s}"
                    )));
                }
                s
            }
            Start::Uniform => self.start_states[rng.random_range(0..self.start_states.len())],
        };
        let mut transitions = Vec::new();
        let mut total_reward = 0.0;
        for _ in 0..max_steps {
            let a = policy.sample(s, rng);
            let t = self.step_unchecked(s, a, rng);
            total_reward += t.reward;
            transitions.push(t);
            if t.terminal {
                break;
            }
            s = t.next_state;
        }
        Ok(Episode {
            transitions,
            total_reward,
        })
    }
}
