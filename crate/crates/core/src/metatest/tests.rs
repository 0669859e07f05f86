use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::corpus::{Token, Walk};
use crate::embed::{initial_table, EmbedConfig, TokenMode};
use crate::error::Error;
use crate::fourrooms::{build_four_rooms, build_task, standard_tasks};
use crate::mdp::{Policy, TabularMdp, Task, Transition};
use crate::oracle::{exact_sr, policy_q, value_iteration};
use crate::rng::seeded;

fn two_state() -> (TabularMdp, Task) {
    let mdp = TabularMdp::new(2, 2, vec![0.7, 0.3, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1], 0.8).unwrap();
    let reward = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.5, 2.0]);
    let task = Task::new("two", &mdp, reward, vec![false, false]).unwrap();
    (mdp, task)
}

fn exhaustive(task: &Task, per_pair: usize, seed: u64) -> SampleSet {
    let mut rng = seeded(seed);
    let mdp = task.mdp();
    let mut transitions = Vec::new();
    for s in (0..mdp.n_states()).filter(|&s| !task.is_terminal(s)) {
        for a in 0..mdp.n_actions() {
            for _ in 0..per_pair {
                transitions.push(task.step(s, a, &mut rng).unwrap());
            }
        }
    }
    SampleSet { transitions }
}

#[test]
fn onehot_is_indicator() {
    let fb = FeatureBasis::onehot(3, 4);
    assert_eq!(fb.dim(), 12);
    let phi = fb.basis(2, 1).unwrap();
    let mut expected = DVector::zeros(12);
    expected[9] = 1.0;
    assert_eq!(phi, expected);
}

#[test]
fn exact_sr_single_state() {
    let mdp = TabularMdp::new(1, 1, vec![1.0], 0.8).unwrap();
    let sr = exact_sr(&mdp, &Policy::uniform(1, 1)).unwrap();
    let fb = FeatureBasis::exact_sr(&sr);
    assert_eq!(fb.dim(), 1);
    assert!((fb.basis(0, 0).unwrap()[0] - 5.0).abs() < 1e-12);
}

fn all_pairs_walk(n_states: usize, n_actions: usize) -> Vec<Walk> {
    let tokens = (0..n_states)
        .flat_map(|state| (0..n_actions).map(move |action| Token { state, action }))
        .collect();
    vec![Walk { tokens }]
}

#[test]
fn embedding_basis_dimension() {
    let walks = all_pairs_walk(5, 4);
    let cfg = EmbedConfig {
        dim: 100,
        ..EmbedConfig::default()
    };
    let table = initial_table(&walks, &cfg).unwrap();
    let fb = FeatureBasis::from_embeddings(FeatureKind::State2vec, &table, 5, 4, Missing::Error)
        .unwrap();
    assert_eq!(fb.basis(3, 2).unwrap().len(), 100);
    assert_eq!(
        fb.basis(3, 2).unwrap().as_slice(),
        table.token_vector(3, 2).unwrap()
    );
}

#[test]
fn state_tokens_use_action_blocks() {
    let walks = all_pairs_walk(3, 2);
    let cfg = EmbedConfig {
        dim: 4,
        tokens: TokenMode::State,
        ..EmbedConfig::default()
    };
    let table = initial_table(&walks, &cfg).unwrap();
    let fb = FeatureBasis::from_embeddings(FeatureKind::State2vec, &table, 3, 2, Missing::Error)
        .unwrap();
    assert_eq!(fb.dim(), 8);
    let phi = fb.basis(1, 1).unwrap();
    assert!(phi.rows(0, 4).iter().all(|&v| v == 0.0));
    assert_eq!(phi.rows(4, 4).as_slice(), table.token_vector(1, 0).unwrap());
}

#[test]
fn missing_features_error_or_zero() {
    let walks = vec![Walk {
        tokens: vec![
            Token {
                state: 0,
                action: 0,
            },
            Token {
                state: 1,
                action: 1,
            },
        ],
    }];
    let table = initial_table(&walks, &EmbedConfig::default()).unwrap();
    let strict =
        FeatureBasis::from_embeddings(FeatureKind::State2vec, &table, 2, 2, Missing::Error)
            .unwrap();
    assert!(matches!(
        strict.basis(0, 1),
        Err(Error::MissingFeature {
            state: 0,
            action: 1
        })
    ));
    let lenient =
        FeatureBasis::from_embeddings(FeatureKind::State2vec, &table, 2, 2, Missing::Zero).unwrap();
    assert!(lenient.basis(0, 1).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn samples_stop_at_goal() {
    let (mdp, layout) = build_four_rooms(0.8).unwrap();
    let spec = &standard_tasks(&layout)[0];
    let task = build_task("a", &mdp, &layout, spec).unwrap();
    // Start next to the goal at (0,0) and always move left.
    let task = task.with_start_states(vec![layout.cell(0, 1)]).unwrap();
    let left = Policy::deterministic(4, &vec![2; mdp.n_states()]).unwrap();
    let samples = collect_samples(&task, &left, 7, 200, &mut seeded(1)).unwrap();
    assert_eq!(samples.len(), 7);
    assert!(samples
        .transitions
        .iter()
        .all(|t| t.terminal && t.reward == 100.0));
    assert!(collect_samples(&task, &left, 0, 200, &mut seeded(1)).is_err());
}

#[test]
fn sample_budget_bound() {
    let (mdp, layout) = build_four_rooms(0.8).unwrap();
    let task = build_task("b", &mdp, &layout, &standard_tasks(&layout)[1]).unwrap();
    let uniform = Policy::uniform(mdp.n_states(), 4);
    let samples = collect_samples(&task, &uniform, 50, 200, &mut seeded(3)).unwrap();
    assert!(samples.len() <= 50 * 200);
    assert!(samples.len() > 50);
}

#[test]
fn lstdq_onehot_matches_policy_q() {
    let (_, task) = two_state();
    let policy = Policy::uniform(2, 2);
    let samples = exhaustive(&task, 20_000, 5);
    let fb = FeatureBasis::onehot(2, 2);
    let theta = lstdq(&samples, &fb, &policy, 0.8, 0.0).unwrap();
    let q = policy_q(&task, &policy).unwrap();
    for s in 0..2 {
        for a in 0..2 {
            assert!(
                (theta[s * 2 + a] - q.q[(s, a)]).abs() < 0.05,
                "{} vs {}",
                theta[s * 2 + a],
                q.q[(s, a)]
            );
        }
    }
}

#[test]
fn lstdq_zero_reward_gives_zero() {
    let (mdp, _) = two_state();
    let task = Task::new("zero", &mdp, DMatrix::zeros(2, 2), vec![false, false]).unwrap();
    let samples = exhaustive(&task, 10, 2);
    let theta = lstdq(
        &samples,
        &FeatureBasis::onehot(2, 2),
        &Policy::uniform(2, 2),
        0.8,
        1e-6,
    )
    .unwrap();
    assert!(theta.iter().all(|&v| v == 0.0));
}

#[test]
fn lstdq_duplicate_samples_invariant() {
    let (_, task) = two_state();
    let samples = exhaustive(&task, 50, 8);
    let mut doubled = samples.clone();
    doubled
        .transitions
        .extend(samples.transitions.iter().copied());
    let fb = FeatureBasis::onehot(2, 2);
    let p = Policy::uniform(2, 2);
    let a = lstdq(&samples, &fb, &p, 0.8, 0.0).unwrap();
    let b = lstdq(&doubled, &fb, &p, 0.8, 0.0).unwrap();
    assert!((a - b).amax() < 1e-10);
}

#[test]
fn lstdq_rank_deficient_without_ridge() {
    let (_, task) = two_state();
    let mut samples = exhaustive(&task, 5, 1);
    samples
        .transitions
        .retain(|t| (t.state, t.action) != (1, 1));
    let fb = FeatureBasis::onehot(2, 2);
    let p = Policy::uniform(2, 2);
    assert!(matches!(
        lstdq(&samples, &fb, &p, 0.8, 0.0),
        Err(Error::RankDeficient)
    ));
    assert!(lstdq(&samples, &fb, &p, 0.8, 1e-6).is_ok());
}

#[test]
fn lstdq_terminal_successor_has_no_value() {
    // One transition into a terminal state: Q = r exactly.
    let samples = SampleSet {
        transitions: vec![Transition {
            state: 0,
            action: 0,
            next_state: 1,
            reward: 3.0,
            terminal: true,
        }],
    };
    let fb = FeatureBasis::onehot(2, 1);
    let theta = lstdq(&samples, &fb, &Policy::uniform(2, 1), 0.9, 1e-9).unwrap();
    assert!((theta[0] - 3.0).abs() < 1e-6);
}

#[test]
fn lspi_huge_tol_stops_after_one_iteration() {
    let (_, task) = two_state();
    let samples = exhaustive(&task, 10, 4);
    let cfg = LspiConfig {
        tol: 1e9,
        ..LspiConfig::default()
    };
    let sol = lspi(&samples, &FeatureBasis::onehot(2, 2), &cfg, None).unwrap();
    assert_eq!(sol.iterations, 1);
    assert!(sol.converged);
}

#[test]
fn lspi_onehot_finds_optimal_policy_on_small_chain() {
    // Deterministic 5-state chain; rightmost state is terminal with reward 1 on entry.
    let mdp = TabularMdp::deterministic(5, 2, 0.9, |s, a| {
        if a == 0 {
            s.saturating_sub(1)
        } else {
            (s + 1).min(4)
        }
    })
    .unwrap();
    let mut reward = DMatrix::zeros(5, 2);
    reward[(3, 1)] = 1.0;
    let mut terminal = vec![false; 5];
    terminal[4] = true;
    let task = Task::new("chain", &mdp, reward, terminal).unwrap();
    let samples = exhaustive(&task, 1, 0);
    let cfg = LspiConfig {
        discount: 0.9,
        ..LspiConfig::default()
    };
    let sol = lspi(&samples, &FeatureBasis::onehot(5, 2), &cfg, None).unwrap();
    assert!(sol.converged);
    assert_eq!(&sol.actions[..4], &[1, 1, 1, 1]);
    let vi = value_iteration(&task, 1e-12, 10_000).unwrap();
    for s in 0..4 {
        assert!((sol.theta[s * 2 + 1] - vi.q[(s, 1)]).abs() < 1e-5);
    }
}

#[test]
fn greedy_zero_theta_picks_first_action() {
    let fb = FeatureBasis::onehot(6, 4);
    let p = greedy(&DVector::zeros(24), &fb).unwrap();
    assert_eq!(p.actions().unwrap(), vec![0; 6]);
    assert!(greedy(&DVector::zeros(5), &fb).is_err());
}

proptest! {
    #[test]
    fn greedy_matches_table_argmax(q in proptest::collection::vec(-10.0f64..10.0, 12), c in 0.01f64..100.0) {
        let fb = FeatureBasis::onehot(3, 4);
        let theta = DVector::from_vec(q.clone());
        let table = crate::oracle::ValueTable { q: DMatrix::from_row_slice(3, 4, &q) };
        let actions = greedy_actions(&theta, &fb).unwrap();
        prop_assert_eq!(&actions, &table.greedy_actions());
        prop_assert_eq!(&greedy_actions(&(theta * c), &fb).unwrap(), &actions);
    }

    #[test]
    fn lstdq_exact_on_deterministic_mdp(
        seed in 0u64..1000,
        next in proptest::collection::vec(0usize..4, 12),
        rewards in proptest::collection::vec(-5.0f64..5.0, 12),
        actions in proptest::collection::vec(0usize..3, 4),
    ) {
        let mdp = TabularMdp::deterministic(4, 3, 0.8, |s, a| next[s * 3 + a]).unwrap();
        let task = Task::new("p", &mdp, DMatrix::from_row_slice(4, 3, &rewards), vec![false; 4]).unwrap();
        let policy = Policy::deterministic(3, &actions).unwrap();
        let samples = exhaustive(&task, 1, seed);
        let theta = lstdq(&samples, &FeatureBasis::onehot(4, 3), &policy, 0.8, 0.0).unwrap();
        let q = policy_q(&task, &policy).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                prop_assert!((theta[s * 3 + a] - q.q[(s, a)]).abs() < 1e-8);
            }
        }
    }
}

fn env_a() -> (crate::fourrooms::GridLayout, Task) {
    let (mdp, layout) = build_four_rooms(0.8).unwrap();
    let task = build_task("a", &mdp, &layout, &standard_tasks(&layout)[0]).unwrap();
    (layout, task)
}

#[test]
fn corner_policy_earns_nothing() {
    let (layout, task) = env_a();
    // Push into the bottom-right corner of the bottom-right room and stay.
    let actions: Vec<usize> = (0..layout.n_cells())
        .map(|c| {
            let (r, col) = layout.coords(c);
            if (7..12).contains(&r) {
                1
            } else if col >= 7 {
                3
            } else {
                0
            }
        })
        .collect();
    let task = task.with_start_states(vec![layout.cell(12, 12)]).unwrap();
    let policy = Policy::deterministic(4, &actions).unwrap();
    assert_eq!(
        evaluate(&task, &policy, 20, 200, &mut seeded(0)).unwrap(),
        0.0
    );
}

#[test]
fn returns_bounded_by_goal_reward() {
    let (_, task) = env_a();
    let uniform = Policy::uniform(task.mdp().n_states(), 4);
    let r = episode_returns(&task, &uniform, 200, 200, &mut seeded(11)).unwrap();
    assert!(r.iter().all(|&x| x <= 100.0));
}

#[test]
fn fitting_does_not_touch_embeddings() {
    let (layout, task) = env_a();
    let mdp = task.mdp();
    let walks = crate::corpus::collect_walks(
        mdp,
        &Policy::uniform(mdp.n_states(), 4),
        &crate::corpus::WalkConfig::new(20, 50, layout.navigable_cells()),
        1,
    )
    .unwrap();
    let cfg = EmbedConfig {
        dim: 8,
        window: 5,
        epochs: 1,
        ..EmbedConfig::default()
    };
    let table = crate::embed::train_embeddings(&walks, &cfg).unwrap();
    let before = table.clone();
    let fb = FeatureBasis::from_embeddings(
        FeatureKind::State2vec,
        &table,
        mdp.n_states(),
        4,
        Missing::Zero,
    )
    .unwrap();
    let samples = collect_samples(
        &task,
        &Policy::uniform(mdp.n_states(), 4),
        5,
        100,
        &mut seeded(2),
    )
    .unwrap();
    lspi(&samples, &fb, &LspiConfig::default(), None).unwrap();
    assert_eq!(table, before);
}

#[test]
fn csv_writers() {
    let mut buf = Vec::new();
    write_theta(&DVector::from_vec(vec![0.5, -2.0]), &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "index,value\n0,0.5\n1,-2\n"
    );
    let mut buf = Vec::new();
    write_policy(&[3, 0], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "state,action\n0,3\n1,0\n");
}
