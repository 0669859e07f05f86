//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test --release --test acceptance`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng as _;
use state2vec::bench::{
    emit_csv, run_bench, seed_average, Bench, EmbeddingKey, ExperimentConfig, ResultRow,
};
use state2vec::embed::loss::{pair_loss, pair_loss_grad};
use state2vec::embed::{state_vectors, EmbeddingTable};
use state2vec::fourrooms::{
    build_four_rooms, build_task, standard_tasks, GridLayout, RoomLabel, TASK_IDS,
};
use state2vec::mdp::{Policy, Task};
use state2vec::metatest::{collect_samples, lspi, FeatureBasis, FeatureKind, Holdout, LspiConfig};
use state2vec::oracle::{
    exact_sr, expected_return, monte_carlo_sr, policy_q, q_from_sr, q_from_sr_on_entry,
    value_iteration,
};
use state2vec::rng;

/// Expected return of the optimal policy on tasks a to d, episodes capped
/// at 200 steps, from the value-iteration oracle.
const DP_OPTIMAL: [f64; 4] = [100.0, 99.93197278911565, 96.53061224489795, 100.0];
const SEEDS: std::ops::Range<u64> = 0..10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn tasks(discount: f64) -> (GridLayout, Vec<Task>) {
    let (mdp, layout) = build_four_rooms(discount).unwrap();
    let tasks = standard_tasks(&layout)
        .iter()
        .zip(TASK_IDS)
        .map(|(spec, id)| build_task(id, &mdp, &layout, spec).unwrap())
        .collect();
    (layout, tasks)
}

fn sr_sampling() -> Outcome {
    let start = Instant::now();
    let (mdp, layout) = build_four_rooms(0.8).unwrap();
    let uniform = Policy::uniform(mdp.n_states(), 4);
    let sr = exact_sr(&mdp, &uniform).unwrap();
    let nav = layout.navigable_cells();
    let mut pick = rng::seeded(1);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let s = nav[pick.random_range(0..nav.len())];
        let a = pick.random_range(0..4);
        let mut r = rng::stream(1, k + 1);
        let sampled = monte_carlo_sr(&mdp, &uniform, s, a, 100_000, 100, &mut r).unwrap();
        for (x, y) in sampled.iter().zip(sr.row(s, a)) {
            worst = worst.max((x - y).abs());
        }
    }
    let took = start.elapsed();
    outcome(
        worst < 0.05 && took < Duration::from_secs(120),
        format!(
            "max entry error {worst:.4} over 20 pairs, {:.1}s",
            took.as_secs_f64()
        ),
    )
}

fn sr_row_sums() -> Outcome {
    let mut worst = 0.0f64;
    for discount in [0.5, 0.8, 0.95] {
        let (mdp, _) = build_four_rooms(discount).unwrap();
        let sr = exact_sr(&mdp, &Policy::uniform(mdp.n_states(), 4)).unwrap();
        let total = 1.0 / (1.0 - discount);
        for s in 0..mdp.n_states() {
            for a in 0..4 {
                worst = worst.max((sr.row(s, a).iter().sum::<f64>() - total).abs());
            }
        }
    }
    outcome(worst < 1e-9, format!("max row-sum deviation {worst:.2e}"))
}

/// Checked twice: a view of each task that pays the cell bonus in the current
/// state, where `Q = Ψ r` holds as stated, and the task itself, whose bonus is
/// paid on entry and whose goal terminates, through the entry adapter.
fn successor_identity() -> Outcome {
    let (layout, tasks) = tasks(0.8);
    let specs = standard_tasks(&layout);
    let mut worst = 0.0f64;
    for (task, spec) in tasks.iter().zip(&specs) {
        let mdp = task.mdp();
        let n = mdp.n_states();
        let uniform = Policy::uniform(n, 4);
        let bonus = spec.cell_bonus(n);

        let (open, _) = build_four_rooms(0.8).unwrap();
        let view = Task::new(
            task.label(),
            &open,
            nalgebra::DMatrix::from_fn(n, 4, |s, _| bonus[s]),
            vec![false; n],
        )
        .unwrap();
        let sr = exact_sr(&open, &uniform).unwrap();
        worst = worst.max(
            q_from_sr(&sr, &bonus)
                .unwrap()
                .max_abs_diff(&policy_q(&view, &uniform).unwrap()),
        );

        let sr = exact_sr(mdp, &uniform).unwrap();
        let q = q_from_sr_on_entry(&sr, &bonus, task.terminal()).unwrap();
        worst = worst.max(q.max_abs_diff(&policy_q(task, &uniform).unwrap()));
    }
    outcome(
        worst < 1e-8,
        format!("max entry difference {worst:.2e} on 4 tasks"),
    )
}

fn tabular_lspi() -> Outcome {
    let (layout, tasks) = tasks(0.8);
    let task = &tasks[0];
    let n = task.mdp().n_states();
    let uniform = Policy::uniform(n, 4);
    let samples = collect_samples(task, &uniform, 500, 200, &mut rng::stream(0, 1)).unwrap();
    let fb = FeatureBasis::onehot(n, 4);
    let holdout = Holdout {
        task,
        n_episodes: 100,
        max_len: 200,
        seed: 0,
    };
    let solution = lspi(&samples, &fb, &LspiConfig::default(), Some(holdout)).unwrap();
    let star = value_iteration(task, 1e-10, 100_000).unwrap();
    let nav = layout.navigable_cells();
    let agree = nav
        .iter()
        .filter(|&&s| star.optimal_actions(s).contains(&solution.actions[s]))
        .count();
    let share = agree as f64 / nav.len() as f64;
    let dp = expected_return(task, &star.greedy_policy(), 200).unwrap();
    let got = expected_return(task, &solution.policy, 200).unwrap();
    outcome(
        share >= 0.99 && (dp - DP_OPTIMAL[0]).abs() < 1e-9 && (got - dp).abs() <= 0.01 * dp,
        format!(
            "optimal action on {agree}/{} navigable states, return {got:.3} vs optimum {dp:.3}",
            nav.len()
        ),
    )
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

fn room_margin(table: &EmbeddingTable, layout: &GridLayout) -> f64 {
    let cells: Vec<usize> = layout
        .navigable_cells()
        .into_iter()
        .filter(|&c| matches!(layout.label(c), RoomLabel::Room(_)))
        .collect();
    let vectors = state_vectors(table, &cells, 4).unwrap();
    let rows: Vec<Vec<f64>> = vectors
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let (mut within, mut across) = ((0.0, 0.0), (0.0, 0.0));
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let c = cosine(&rows[i], &rows[j]);
            let bucket = if layout.label(cells[i]) == layout.label(cells[j]) {
                &mut within
            } else {
                &mut across
            };
            bucket.0 += c;
            bucket.1 += 1.0;
        }
    }
    within.0 / within.1 - across.0 / across.1
}

fn room_clustering() -> Outcome {
    let cfg = ExperimentConfig {
        seeds: SEEDS.collect(),
        dims: vec![50],
        ..ExperimentConfig::default()
    };
    let bench = Bench::new(&cfg, true).unwrap();
    let margins: Vec<f64> = bench
        .embeddings()
        .values()
        .map(|t| room_margin(t, &bench.env.layout))
        .collect();
    let positive = margins.iter().filter(|&&m| m > 0.0).count();
    let least = margins.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        positive == 10,
        format!("margin > 0 on {positive}/10 seeds, smallest {least:.4}"),
    )
}

fn grid_config() -> ExperimentConfig {
    ExperimentConfig {
        seeds: SEEDS.collect(),
        methods: vec![FeatureKind::State2vec, FeatureKind::Node2vec],
        dims: vec![100],
        ..ExperimentConfig::default()
    }
}

fn averages(rows: &[ResultRow], method: &str, task: &str) -> BTreeMap<usize, f64> {
    seed_average(rows)
        .into_iter()
        .filter(|((t, m, _, _), _)| t == task && m == method)
        .map(|((_, _, _, eps), v)| (eps, v))
        .collect()
}

fn full_performance(rows: &[ResultRow], took: Duration) -> Outcome {
    let mut pass = took < Duration::from_secs(600);
    let mut parts = Vec::new();
    for (id, dp) in TASK_IDS.iter().zip(DP_OPTIMAL) {
        let mean = averages(rows, "state2vec", id)[&50];
        pass &= mean >= 0.9 * dp;
        parts.push(format!("{id} {mean:.1}/{dp:.1}"));
    }
    outcome(
        pass,
        format!(
            "10-seed mean return vs optimum: {}; grid {:.0}s",
            parts.join(", "),
            took.as_secs_f64()
        ),
    )
}

fn beats_node2vec(rows: &[ResultRow]) -> Outcome {
    let ours = averages(rows, "state2vec", "a")[&50];
    let theirs = averages(rows, "node2vec", "a")[&50];
    outcome(
        ours >= theirs,
        format!("env a: state2vec {ours:.2}, node2vec {theirs:.2}"),
    )
}

fn data_size(grid: &Bench) -> Outcome {
    let cfg = ExperimentConfig {
        tasks: vec!["a".into()],
        methods: vec![FeatureKind::State2vec],
        ..grid.cfg.clone()
    };
    let supplied = grid
        .embeddings()
        .iter()
        .filter(|(k, _)| k.method == FeatureKind::State2vec)
        .map(|(k, t)| (*k, t.clone()))
        .collect::<BTreeMap<EmbeddingKey, EmbeddingTable>>();
    let bench = Bench::with_embeddings(&cfg, true, supplied).unwrap();
    let budgets = [5, 10, 25, 50];
    let rows = bench.sweep(&budgets).unwrap();
    let curve = averages(&rows, "state2vec", "a");
    let points: Vec<f64> = budgets.iter().map(|b| curve[b]).collect();
    let band = 0.05
        * points
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .abs();
    let monotone = points.windows(2).all(|w| w[1] >= w[0] - band);
    let last = points[points.len() - 1];
    outcome(
        monotone && last >= 0.9 * DP_OPTIMAL[0],
        format!(
            "returns at 5/10/25/50 episodes: {}; monotone within band: {monotone}; \
             50-episode point {last:.1} vs threshold {:.1}",
            points
                .iter()
                .map(|p| format!("{p:.1}"))
                .collect::<Vec<_>>()
                .join("/"),
            0.9 * DP_OPTIMAL[0]
        ),
    )
}

fn gradients() -> Outcome {
    let mut r = rng::seeded(99);
    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = r.random_range(2..32);
        let k = r.random_range(1..8);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(-1.0..1.0)).collect() };
        let mut params = draw(d * (k + 2));
        let weight = draw(1)[0].abs().max(0.01);
        let loss = |p: &[f64]| {
            let negs: Vec<&[f64]> = p[2 * d..].chunks(d).collect();
            pair_loss(&p[..d], &p[d..2 * d], &negs, weight)
        };
        let negs: Vec<&[f64]> = params[2 * d..].chunks(d).collect();
        let g = pair_loss_grad(&params[..d], &params[d..2 * d], &negs, weight);
        let analytic: Vec<f64> = g
            .center
            .iter()
            .chain(&g.context)
            .chain(g.negatives.iter().flatten())
            .copied()
            .collect();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = params[i];
            params[i] = orig + h;
            let up = loss(&params);
            params[i] = orig - h;
            let down = loss(&params);
            params[i] = orig;
            worst = worst.max(rel(a, (up - down) / (2.0 * h)));
        }
    }
    outcome(
        worst < 1e-5,
        format!("worst relative error {worst:.2e} over 100 configurations"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(
        "methods = state2vec, node2vec, onehot, exact-sr\ndims = 16\nseeds = 0, 1\n\
         n_walks = 100\nwalk_len = 60\nwindow = 20\nmeta_test_episodes = 20\neval_episodes = 50\n\
         missing = zero\n",
        None,
    )
    .unwrap();
    let paths = [dir.path().join("first.csv"), dir.path().join("second.csv")];
    for p in &paths {
        emit_csv(&run_bench(&cfg, true).unwrap(), p).unwrap();
    }
    let (a, b) = (
        std::fs::read(&paths[0]).unwrap(),
        std::fs::read(&paths[1]).unwrap(),
    );
    outcome(
        a == b,
        format!(
            "{} bytes, {} rows, identical: {}",
            a.len(),
            a.iter().filter(|&&c| c == b'\n').count() - 1,
            a == b
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, o: Outcome| {
        println!(
            "{} {n:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };
    record(1, "successor sampling cross-check", sr_sampling());
    record(2, "successor row sums", sr_row_sums());
    record(3, "values from successor rows", successor_identity());
    record(4, "tabular LSPI", tabular_lspi());
    record(5, "room clustering", room_clustering());

    let start = Instant::now();
    let grid = Bench::new(&grid_config(), true).unwrap();
    let rows = grid.run().unwrap();
    let took = start.elapsed();
    record(
        6,
        "state2vec near-optimal on every task",
        full_performance(&rows, took),
    );
    record(7, "state2vec at least node2vec", beats_node2vec(&rows));
    record(8, "return grows with meta-test data", data_size(&grid));
    record(9, "gradient check", gradients());
    record(10, "deterministic bench output", determinism());

    let failed: Vec<String> = results
        .iter()
        .filter(|(_, _, o)| !o.pass)
        .map(|(n, name, _)| format!("{n} ({name})"))
        .collect();
    if failed.is_empty() {
        println!("all 10 criteria pass");
    } else {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
