use nalgebra::DMatrix;
use state2vec::fourrooms::{build_four_rooms, build_task, standard_tasks, TASK_IDS};
use state2vec::mdp::{Policy, Task, Transition};
use state2vec::metatest::{lspi, lstdq, FeatureBasis, LspiConfig, SampleSet};
use state2vec::oracle::{exact_sr, expected_return, policy_q, value_iteration};

/// One transition for every pair of a deterministic task. Terminal states
/// step to themselves for nothing.
fn exhaustive(task: &Task) -> SampleSet {
    let mdp = task.mdp();
    let mut transitions = Vec::new();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let next_state = mdp.support(s, a)[0].0;
            transitions.push(Transition {
                state: s,
                action: a,
                next_state,
                reward: task.reward()[(s, a)],
                terminal: task.is_terminal(next_state),
            });
        }
    }
    SampleSet { transitions }
}

#[test]
fn lstdq_onehot_reproduces_policy_q_exactly() {
    let (mdp, layout) = build_four_rooms(0.8).unwrap();
    let fb = FeatureBasis::onehot(mdp.n_states(), 4);
    for (spec, id) in standard_tasks(&layout).iter().zip(TASK_IDS) {
        let task = build_task(id, &mdp, &layout, spec).unwrap();
        let uniform = Policy::uniform(mdp.n_states(), 4);
        let theta = lstdq(&exhaustive(&task), &fb, &uniform, 0.8, 0.0).unwrap();
        let truth = policy_q(&task, &uniform).unwrap();
        for s in 0..mdp.n_states() {
            for a in 0..4 {
                let err = (theta[s * 4 + a] - truth.q[(s, a)]).abs();
                assert!(err < 1e-9, "task {id}, ({s}, {a}): {err}");
            }
        }
    }
}

/// Reward `r(s)` is paid in the current state and nothing terminates, so
/// `Q^π = Ψ^π r` and successor rows span every policy's values.
#[test]
fn successor_rows_solve_state_reward_tasks() {
    let (mdp, layout) = build_four_rooms(0.8).unwrap();
    let sr = exact_sr(&mdp, &Policy::uniform(mdp.n_states(), 4)).unwrap();
    let fb = FeatureBasis::exact_sr(&sr);
    for (spec, id) in standard_tasks(&layout).iter().zip(TASK_IDS) {
        let bonus = spec.cell_bonus(layout.n_cells());
        let reward = DMatrix::from_fn(mdp.n_states(), 4, |s, _| bonus[s]);
        let task = Task::new(id, &mdp, reward, vec![false; mdp.n_states()])
            .unwrap()
            .with_start_states(layout.navigable_cells())
            .unwrap();
        let solution = lspi(&exhaustive(&task), &fb, &LspiConfig::default(), None).unwrap();
        let star = value_iteration(&task, 1e-10, 100_000)
            .unwrap()
            .greedy_policy();
        let optimum = expected_return(&task, &star, 200).unwrap();
        let got = expected_return(&task, &solution.policy, 200).unwrap();
        assert!(
            (optimum - got).abs() <= 0.02 * optimum.abs(),
            "task {id}: {got} vs {optimum}"
        );
    }
}
