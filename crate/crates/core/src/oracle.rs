//! Exact ground truth: successor representation, Bellman solutions and
//! Monte Carlo estimates.
//!
//! The successor representation of a policy π is
//!
//! ```text
//! Ψ(s, a, s') = E_π[ Σ_{t≥0} γ^t 1(s_t = s') | s_0 = s, a_0 = a ]
//!             = 1(s = s') + γ Σ_x P(s, a, x) M_π(x, s'),   M_π = (I − γ P_π)⁻¹
//! ```
//!
//! so that for a state reward `r`, `Q(s, a) = Σ_{s'} Ψ(s, a, s') r(s')` is the
//! value of collecting `r(s_t)` at every visited state, including `s_0`.
//!
//! Tasks in this crate pay rewards on entering a state and stop at terminal
//! states, which is not of that form. [`q_from_sr_on_entry`] is the exact
//! adapter between the two.
//!
//! Successor features, generalised policy improvement and universal
//! successor-feature approximators generalise the same decomposition to
//! learned reward features; none of them is implemented here.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::csvfmt::sig9;
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, Task};
use crate::rng::Rng;

/// Tie tolerance, relative to the magnitude of the best value, used by every
/// greedy action choice.
pub const TIE_TOL: f64 = 1e-9;

/// Lowest index whose value is within [`TIE_TOL`] of the maximum.
pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let values: Vec<f64> = values.into_iter().collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * best.abs().max(1.0);
    values.iter().position(|&v| v >= best - tol).unwrap_or(0)
}

/// Discounted future state occupancy, one row per `(s, a)` (row `s·|A| + a`).
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessorMatrix {
    values: DMatrix<f64>,
    n_actions: usize,
    discount: f64,
    policy_tag: String,
}

impl SuccessorMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn policy_tag(&self) -> &str {
        &self.policy_tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.policy_tag = tag.into();
        self
    }

    /// The row `Ψ(s, a, ·)`.
    pub fn row(&self, s: usize, a: usize) -> Vec<f64> {
        self.values
            .row(s * self.n_actions + a)
            .iter()
            .copied()
            .collect()
    }

    /// Per-state rows averaged over actions, the |S|-dimensional vectors shown
    /// in state-space PCA plots.
    pub fn state_rows(&self) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |s, j| {
            (0..self.n_actions)
                .map(|a| self.values[(s * self.n_actions + a, j)])
                .sum::<f64>()
                / self.n_actions as f64
        })
    }

    /// CSV with header `state,action,s0,...`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.n_states()).map(|j| format!("s{j}")).collect();
        writeln!(out, "state,action,{}", header.join(","))?;
        for (idx, row) in self.values.row_iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|&v| sig9(v)).collect();
            writeln!(
                out,
                "{},{},{}",
                idx / self.n_actions,
                idx % self.n_actions,
                cells.join(",")
            )?;
        }
        Ok(())
    }
}

/// `Q(s, a)` table.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub q: DMatrix<f64>,
}

impl ValueTable {
    pub fn n_states(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.q.ncols()
    }

    /// Greedy action per state, ties going to the lowest action id.
    pub fn greedy_actions(&self) -> Vec<usize> {
        self.q
            .row_iter()
            .map(|row| argmax_lowest(row.iter().copied()))
            .collect()
    }

    pub fn greedy_policy(&self) -> Policy {
        Policy::deterministic(self.n_actions(), &self.greedy_actions()).expect("argmax is in range")
    }

    /// Actions within [`TIE_TOL`] of the best in state `s`.
    pub fn optimal_actions(&self, s: usize) -> Vec<usize> {
        let row = self.q.row(s);
        let best = row.max();
        let tol = TIE_TOL * best.abs().max(1.0);
        (0..self.n_actions())
            .filter(|&a| row[a] >= best - tol)
            .collect()
    }

    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        (&self.q - &other.q).amax()
    }

    /// CSV with header `state,action,q`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "state,action,q")?;
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                writeln!(out, "{s},{a},{}", sig9(self.q[(s, a)]))?;
            }
        }
        Ok(())
    }
}

/// `(I − γ P_π)⁻¹` for the state chain of `policy`.
fn occupancy_matrix(mdp: &TabularMdp, policy: &Policy) -> Result<DMatrix<f64>> {
    let n = mdp.n_states();
    let system = DMatrix::identity(n, n) - mdp.state_chain(policy) * mdp.discount();
    let inverse = system
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Internal("I − γP_π is singular".into()))?;
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("non-finite occupancy matrix".into()));
    }
    Ok(inverse)
}

/// Exact successor representation of `policy` on `mdp`.
pub fn exact_sr(mdp: &TabularMdp, policy: &Policy) -> Result<SuccessorMatrix> {
    policy.check_shape(mdp)?;
    let (n, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
    let occupancy = occupancy_matrix(mdp, policy)?;
    let mut values = DMatrix::zeros(n * na, n);
    for s in 0..n {
        for a in 0..na {
            let idx = s * na + a;
            for &(next, p) in mdp.support(s, a) {
                for j in 0..n {
                    values[(idx, j)] += gamma * p * occupancy[(next, j)];
                }
            }
            values[(idx, s)] += 1.0;
        }
    }
    Ok(SuccessorMatrix {
        values,
        n_actions: na,
        discount: gamma,
        policy_tag: "policy".into(),
    })
}

/// Sampled `Ψ(s, a, ·)`: the mean over rollouts of `Σ_{t<horizon} γ^t 1(s_t = ·)`.
pub fn monte_carlo_sr(
    mdp: &TabularMdp,
    policy: &Policy,
    s: usize,
    a: usize,
    n_rollouts: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Result<DVector<f64>> {
    mdp.check_pair(s, a)?;
    policy.check_shape(mdp)?;
    if n_rollouts == 0 || horizon == 0 {
        return Err(Error::input("n_rollouts and horizon must be positive"));
    }
    let gamma = mdp.discount();
    let mut total = DVector::zeros(mdp.n_states());
    for _ in 0..n_rollouts {
        let (mut state, mut action) = (s, a);
        let mut weight = 1.0;
        total[state] += weight;
        for _ in 1..horizon {
            state = mdp.sample_unchecked(state, action, rng);
            weight *= gamma;
            if weight == 0.0 {
                break;
            }
            total[state] += weight;
            action = policy.sample(state, rng);
        }
    }
    Ok(total / n_rollouts as f64)
}

/// `Q(s, a) = Σ_{s'} Ψ(s, a, s') r(s')` for a reward collected at every visited state.
pub fn q_from_sr(sr: &SuccessorMatrix, state_reward: &[f64]) -> Result<ValueTable> {
    if state_reward.len() != sr.n_states() {
        return Err(Error::input(format!(
            "reward has {} entries, successor matrix covers {} states",
            state_reward.len(),
            sr.n_states()
        )));
    }
    let flat = &sr.values * DVector::from_column_slice(state_reward);
    Ok(ValueTable {
        q: DMatrix::from_fn(sr.n_states(), sr.n_actions, |s, a| {
            flat[s * sr.n_actions + a]
        }),
    })
}

/// Q-values of a task that pays `entry_reward[s']` on entering `s'` and stops
/// on entering a terminal state, from the successor representation of the
/// task-paired dynamics (terminal states absorbing):
///
/// ```text
/// y(s')   = entry_reward(s') · (1 − γ  if s' terminal else 1)
/// Q(s, a) = (Σ_{s'} Ψ(s, a, s') y(s') − y(s)) / γ     for non-terminal s
/// Q(s, a) = 0                                         for terminal s
/// ```
///
/// The `(1 − γ)` factor turns the endless stream of absorbing-state visits
/// into a single payment at the entry time.
pub fn q_from_sr_on_entry(
    sr: &SuccessorMatrix,
    entry_reward: &[f64],
    terminal: &[bool],
) -> Result<ValueTable> {
    let gamma = sr.discount();
    if gamma <= 0.0 {
        return Err(Error::input(
            "the entry-reward adapter needs a positive discount",
        ));
    }
    if terminal.len() != sr.n_states() {
        return Err(Error::input("terminal flags do not cover every state"));
    }
    let scaled: Vec<f64> = entry_reward
        .iter()
        .zip(terminal)
        .map(|(&r, &t)| if t { r * (1.0 - gamma) } else { r })
        .collect();
    let mut table = q_from_sr(sr, &scaled)?;
    for s in 0..sr.n_states() {
        for a in 0..sr.n_actions() {
            table.q[(s, a)] = if terminal[s] {
                0.0
            } else {
                (table.q[(s, a)] - scaled[s]) / gamma
            };
        }
    }
    Ok(table)
}

/// One Bellman optimality backup. Terminal states have value 0.
pub fn bellman_sweep(task: &Task, q: &ValueTable) -> ValueTable {
    let mdp = task.mdp();
    let gamma = mdp.discount();
    let v: Vec<f64> = (0..mdp.n_states())
        .map(|s| {
            if task.is_terminal(s) {
                0.0
            } else {
                q.q.row(s).max()
            }
        })
        .collect();
    let q = DMatrix::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        if task.is_terminal(s) {
            return 0.0;
        }
        let future: f64 = mdp.support(s, a).iter().map(|&(s2, p)| p * v[s2]).sum();
        task.reward()[(s, a)] + gamma * future
    });
    ValueTable { q }
}

/// Optimal Q-values by repeated Bellman backups from zero. Stops once the
/// sup-norm error bound `γ/(1−γ)·residual` is below `tol`.
pub fn value_iteration(task: &Task, tol: f64, max_iters: usize) -> Result<ValueTable> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::input("tol must be positive"));
    }
    let gamma = task.mdp().discount();
    let mut q = ValueTable {
        q: DMatrix::zeros(task.mdp().n_states(), task.mdp().n_actions()),
    };
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = bellman_sweep(task, &q);
        residual = next.max_abs_diff(&q);
        q = next;
        if residual * gamma <= tol * (1.0 - gamma) {
            return Ok(q);
        }
    }
    Err(Error::Convergence {
        iterations: max_iters,
        residual,
    })
}

/// Exact `Q^π` from the linear Bellman expectation system over state-action
/// pairs. Terminal states have value 0.
pub fn policy_q(task: &Task, policy: &Policy) -> Result<ValueTable> {
    let mdp = task.mdp();
    policy.check_shape(mdp)?;
    let (n, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
    let dim = n * na;
    let mut system = DMatrix::<f64>::identity(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for s in (0..n).filter(|&s| !task.is_terminal(s)) {
        for a in 0..na {
            let row = s * na + a;
            rhs[row] = task.reward()[(s, a)];
            for &(s2, p) in mdp.support(s, a) {
                if task.is_terminal(s2) {
                    continue;
                }
                for a2 in 0..na {
                    system[(row, s2 * na + a2)] -= gamma * p * policy.prob(s2, a2);
                }
            }
        }
    }
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("Bellman expectation system is singular".into()))?;
    Ok(ValueTable {
        q: DMatrix::from_fn(n, na, |s, a| solution[s * na + a]),
    })
}

/// Expected undiscounted return of `policy` over episodes of at most
/// `max_steps` steps, averaged over the task's start states. Exact backward
/// recursion; the reference that sampled evaluations estimate.
pub fn expected_return(task: &Task, policy: &Policy, max_steps: usize) -> Result<f64> {
    let mdp = task.mdp();
    policy.check_shape(mdp)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut value = vec![0.0; n];
    for _ in 0..max_steps {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                if task.is_terminal(s) {
                    return 0.0;
                }
                (0..na)
                    .map(|a| {
                        let future: f64 =
                            mdp.support(s, a).iter().map(|&(s2, p)| p * value[s2]).sum();
                        policy.prob(s, a) * (task.reward()[(s, a)] + future)
                    })
                    .sum()
            })
            .collect();
        value = next;
    }
    let starts = task.start_states();
    Ok(starts.iter().map(|&s| value[s]).sum::<f64>() / starts.len() as f64)
}

/// Mean discounted return of `policy` after taking `a` in `s`, for checking [`policy_q`].
pub fn monte_carlo_q(
    task: &Task,
    policy: &Policy,
    s: usize,
    a: usize,
    n_episodes: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::input("n_episodes must be positive"));
    }
    let gamma = task.mdp().discount();
    let mut total = 0.0;
    for _ in 0..n_episodes {
        let (mut state, mut action) = (s, a);
        let mut weight = 1.0;
        for _ in 0..horizon {
            let t = task.step(state, action, rng)?;
            total += weight * t.reward;
            if t.terminal {
                break;
            }
            weight *= gamma;
            state = t.next_state;
            action = policy.sample(state, rng);
        }
    }
    Ok(total / n_episodes as f64)
}
