use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::basis::{greedy_actions, FeatureBasis};
use crate::csvfmt::sig9;
use crate::error::{Error, Result};
use crate::mdp::{Policy, Start, Task, Transition};
use crate::rng::{self, Rng};

/// Transitions sampled from one task.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub transitions: Vec<Transition>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Runs `n_episodes` episodes of `behavior` from uniform starts and keeps
/// every transition.
pub fn collect_samples(
    task: &Task,
    behavior: &Policy,
    n_episodes: usize,
    max_len: usize,
    rng: &mut Rng,
) -> Result<SampleSet> {
    if n_episodes == 0 {
        return Err(Error::input("at least one meta-test episode is required"));
    }
    let mut transitions = Vec::new();
    for _ in 0..n_episodes {
        transitions.extend(
            task.run_episode(behavior, max_len, Start::Uniform, rng)?
                .transitions,
        );
    }
    Ok(SampleSet { transitions })
}

/// Visit count, reward sum and next-state counts of one `(s, a)`.
type Group = (f64, f64, BTreeMap<usize, f64>);

/// Samples grouped by `(s, a)`: visit count, reward sum and next-state counts.
struct Summary {
    entries: Vec<Entry>,
}

struct Entry {
    state: usize,
    action: usize,
    count: f64,
    reward: f64,
    /// `(s', count)` over non-terminal successors.
    next: Vec<(usize, f64)>,
}

impl Summary {
    fn new(samples: &SampleSet, fb: &FeatureBasis) -> Result<Self> {
        let mut groups: BTreeMap<(usize, usize), Group> = BTreeMap::new();
        for t in &samples.transitions {
            if t.state >= fb.n_states()
                || t.action >= fb.n_actions()
                || t.next_state >= fb.n_states()
            {
                return Err(Error::input(format!(
                    "sample ({}, {}, {}) is outside the basis",
                    t.state, t.action, t.next_state
                )));
            }
            let g = groups.entry((t.state, t.action)).or_default();
            g.0 += 1.0;
            g.1 += t.reward;
            if !t.terminal {
                *g.2.entry(t.next_state).or_default() += 1.0;
            }
        }
        let entries = groups
            .into_iter()
            .map(|((state, action), (count, reward, next))| Entry {
                state,
                action,
                count,
                reward,
                next: next.into_iter().collect(),
            })
            .collect();
        Ok(Summary { entries })
    }
}

/// `Σ_a π(a|s) φ(s, a)` for every state, built lazily for the states that
/// appear as successors.
fn successor_features(
    fb: &FeatureBasis,
    policy: &Policy,
    summary: &Summary,
) -> Result<DMatrix<f64>> {
    let mut needed = vec![false; fb.n_states()];
    for e in &summary.entries {
        for &(s, _) in &e.next {
            needed[s] = true;
        }
    }
    let mut out = DMatrix::zeros(fb.n_states(), fb.dim());
    for s in (0..fb.n_states()).filter(|&s| needed[s]) {
        for a in 0..fb.n_actions() {
            let p = policy.prob(s, a);
            if p == 0.0 {
                continue;
            }
            fb.check(s, a)?;
            for &k in fb.nonzero(s, a) {
                out[(s, k)] += p * fb.value(s, a, k);
            }
        }
    }
    Ok(out)
}

fn solve(mut a: DMatrix<f64>, b: DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    for k in 0..a.nrows() {
        a[(k, k)] += ridge;
    }
    let lu = a.lu();
    let pivots = lu.u().diagonal().abs();
    let (lo, hi) = (pivots.min(), pivots.max());
    if hi.is_nan() || hi <= 0.0 || lo <= 1e-13 * hi {
        return Err(Error::RankDeficient);
    }
    match lu.solve(&b) {
        Some(theta) if theta.iter().all(|v| v.is_finite()) => Ok(theta),
        _ => Err(Error::RankDeficient),
    }
}

fn lstdq_summary(
    summary: &Summary,
    fb: &FeatureBasis,
    policy: &Policy,
    discount: f64,
    ridge: f64,
) -> Result<DVector<f64>> {
    let d = fb.dim();
    let next = successor_features(fb, policy, summary)?;
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    let mut diff = DVector::zeros(d);
    for e in &summary.entries {
        fb.check(e.state, e.action)?;
        let nz = fb.nonzero(e.state, e.action);
        diff.fill(0.0);
        for &k in nz {
            diff[k] = e.count * fb.value(e.state, e.action, k);
        }
        for &(s, c) in &e.next {
            diff.axpy(-discount * c, &next.row(s).transpose(), 1.0);
        }
        for &k in nz {
            let phi = fb.value(e.state, e.action, k);
            let mut row = a.row_mut(k);
            for j in 0..d {
                row[j] += phi * diff[j];
            }
            b[k] += phi * e.reward;
        }
    }
    solve(a, b, ridge)
}

/// Least-squares fixed point of `Q^π` in the span of `fb` from `samples`:
/// solves `(A + ridge·I) θ = b` with `A = Σ φ(s,a)(φ(s,a) − γ φ(s',π))ᵀ` and
/// `b = Σ φ(s,a) r`. Terminal successors contribute no successor feature.
pub fn lstdq(
    samples: &SampleSet,
    fb: &FeatureBasis,
    policy: &Policy,
    discount: f64,
    ridge: f64,
) -> Result<DVector<f64>> {
    check_params(discount, ridge)?;
    if policy.n_states() != fb.n_states() || policy.n_actions() != fb.n_actions() {
        return Err(Error::input("policy shape does not match the basis"));
    }
    lstdq_summary(&Summary::new(samples, fb)?, fb, policy, discount, ridge)
}

fn check_params(discount: f64, ridge: f64) -> Result<()> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::input(format!(
            "discount {discount} is outside [0, 1)"
        )));
    }
    if ridge.is_nan() || ridge < 0.0 {
        return Err(Error::input("ridge must be non-negative"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LspiConfig {
    pub discount: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
}

impl Default for LspiConfig {
    fn default() -> Self {
        LspiConfig {
            discount: 0.8,
            tol: 1e-4,
            max_iter: 30,
            ridge: 1e-6,
        }
    }
}

/// Rollout budget used to rank iterates when LSPI does not converge.
#[derive(Clone, Copy, Debug)]
pub struct Holdout<'a> {
    pub task: &'a Task,
    pub n_episodes: usize,
    pub max_len: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LspiSolution {
    pub theta: DVector<f64>,
    /// Greedy in `theta`.
    pub policy: Policy,
    pub actions: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Least-squares policy iteration from the uniform random policy. Stops when
/// `‖θ_k − θ_{k−1}‖∞ < tol` (with `θ_0 = 0`), when the greedy policy repeats,
/// or after `max_iter` evaluations. Without convergence the iterate with the
/// best holdout return is kept, or the last one if no holdout is given.
pub fn lspi(
    samples: &SampleSet,
    fb: &FeatureBasis,
    cfg: &LspiConfig,
    holdout: Option<Holdout<'_>>,
) -> Result<LspiSolution> {
    check_params(cfg.discount, cfg.ridge)?;
    if cfg.max_iter == 0 {
        return Err(Error::input("max_iter must be at least 1"));
    }
    let summary = Summary::new(samples, fb)?;
    let mut policy = Policy::uniform(fb.n_states(), fb.n_actions());
    let mut prev_actions: Option<Vec<usize>> = None;
    let mut theta = DVector::zeros(fb.dim());
    let mut iterates = Vec::new();
    for k in 1..=cfg.max_iter {
        let next = lstdq_summary(&summary, fb, &policy, cfg.discount, cfg.ridge)?;
        let change = (&next - &theta).amax();
        theta = next;
        let actions = greedy_actions(&theta, fb)?;
        let repeated = prev_actions.as_ref() == Some(&actions);
        policy = Policy::deterministic(fb.n_actions(), &actions)?;
        if change < cfg.tol || repeated {
            return Ok(LspiSolution {
                theta,
                policy,
                actions,
                iterations: k,
                converged: true,
            });
        }
        iterates.push((theta.clone(), actions.clone()));
        prev_actions = Some(actions);
    }
    let (theta, actions) = match holdout {
        Some(h) => {
            let mut best: Option<(f64, usize)> = None;
            for (i, (_, actions)) in iterates.iter().enumerate() {
                let p = Policy::deterministic(fb.n_actions(), actions)?;
                let mut rng = rng::stream(h.seed, rng::streams::HOLDOUT);
                let score = evaluate(h.task, &p, h.n_episodes, h.max_len, &mut rng)?;
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, i));
                }
            }
            iterates.swap_remove(best.expect("at least one iterate").1)
        }
        None => iterates.pop().expect("at least one iterate"),
    };
    Ok(LspiSolution {
        policy: Policy::deterministic(fb.n_actions(), &actions)?,
        theta,
        actions,
        iterations: cfg.max_iter,
        converged: false,
    })
}

/// Undiscounted return of each of `n_episodes` episodes from uniform starts.
pub fn episode_returns(
    task: &Task,
    policy: &Policy,
    n_episodes: usize,
    max_len: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if n_episodes == 0 {
        return Err(Error::input("at least one evaluation episode is required"));
    }
    (0..n_episodes)
        .map(|_| {
            Ok(task
                .run_episode(policy, max_len, Start::Uniform, rng)?
                .total_reward)
        })
        .collect()
}

/// Mean undiscounted return over `n_episodes` episodes from uniform starts.
pub fn evaluate(
    task: &Task,
    policy: &Policy,
    n_episodes: usize,
    max_len: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let r = episode_returns(task, policy, n_episodes, max_len, rng)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// `index,value` rows.
pub fn write_theta(theta: &DVector<f64>, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "index,value")?;
    for (i, v) in theta.iter().enumerate() {
        writeln!(out, "{i},{}", sig9(*v))?;
    }
    Ok(())
}

/// `state,action` rows of a deterministic policy.
pub fn write_policy(actions: &[usize], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "state,action")?;
    for (s, a) in actions.iter().enumerate() {
        writeln!(out, "{s},{a}")?;
    }
    Ok(())
}
