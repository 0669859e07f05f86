use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::ResultRow;
use crate::corpus::{collect_walks, Walk, WalkConfig};
use crate::embed::{train_embeddings, EmbedConfig, EmbeddingTable, Workers};
use crate::error::{Error, Result};
use crate::fourrooms::{build_task, parse_grid, standard_tasks, task_index, GridLayout};
use crate::mdp::{Policy, TabularMdp, Task};
use crate::metatest::{
    collect_samples, episode_returns, lspi, FeatureBasis, FeatureKind, Holdout, LspiConfig,
    LspiSolution,
};
use crate::oracle::{exact_sr, expected_return, value_iteration};
use crate::rng::{self, streams};

/// Layout, shared dynamics and the configured tasks.
#[derive(Clone, Debug)]
pub struct Environment {
    pub layout: GridLayout,
    pub mdp: TabularMdp,
    /// `(task id, task)` in configuration order.
    pub tasks: Vec<(String, Task)>,
}

impl Environment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let layout = match &cfg.env_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_grid(&text)
                    .map_err(|e| e.context(format!("reading {}", path.display())))?
                    .0
            }
            None => GridLayout::four_rooms(),
        };
        let mdp = layout.to_mdp(cfg.discount)?;
        let specs = standard_tasks(&layout);
        let tasks = cfg
            .tasks
            .iter()
            .map(|id| {
                let spec = &specs[task_index(id)?];
                Ok((id.clone(), build_task(id.as_str(), &mdp, &layout, spec)?))
            })
            .collect::<Result<_>>()?;
        Ok(Environment { layout, mdp, tasks })
    }

    pub fn task(&self, id: &str) -> Result<&Task> {
        self.tasks
            .iter()
            .find(|(t, _)| t == id)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::input(format!("task {id:?} is not configured")))
    }
}

/// Key of one learned representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmbeddingKey {
    pub seed: u64,
    pub method: FeatureKind,
    pub dim: usize,
}

impl EmbeddingKey {
    pub fn file_name(&self) -> String {
        format!("{}_d{}_seed{}.csv", self.method.name(), self.dim, self.seed)
    }
}

/// Meta-training corpus of `seed` under the uniform random policy.
pub fn meta_training_walks(
    env: &Environment,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<Walk>> {
    let behavior = Policy::uniform(env.mdp.n_states(), env.mdp.n_actions());
    let walk_cfg = WalkConfig::new(cfg.n_walks, cfg.walk_len, env.layout.navigable_cells());
    collect_walks(&env.mdp, &behavior, &walk_cfg, seed)
}

pub fn embed_config(
    cfg: &ExperimentConfig,
    key: EmbeddingKey,
    deterministic: bool,
) -> Result<EmbedConfig> {
    let mode = key
        .method
        .embed_mode()
        .ok_or_else(|| Error::input(format!("{} has no embedding", key.method.name())))?;
    Ok(EmbedConfig {
        dim: key.dim,
        window: cfg.window,
        discount: cfg.discount,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        min_learning_rate: cfg.min_learning_rate,
        negatives: cfg.negatives,
        seed: key.seed,
        mode,
        tokens: cfg.tokens,
        objective: crate::embed::Objective::NegativeSampling,
        workers: if deterministic || cfg.workers == 1 {
            Workers::Single
        } else {
            Workers::Parallel(cfg.workers)
        },
    })
}

/// A configured grid with its reward-agnostic representations trained once
/// per `(seed, method, dim)` and shared by every task.
pub struct Bench {
    pub cfg: ExperimentConfig,
    pub env: Environment,
    pub deterministic: bool,
    embeddings: BTreeMap<EmbeddingKey, EmbeddingTable>,
    exact: Option<FeatureBasis>,
}

impl Bench {
    pub fn new(cfg: &ExperimentConfig, deterministic: bool) -> Result<Self> {
        Self::with_embeddings(cfg, deterministic, BTreeMap::new())
    }

    /// Like [`Bench::new`], but uses the given tables instead of training
    /// them. Keys not supplied are trained as usual.
    pub fn with_embeddings(
        cfg: &ExperimentConfig,
        deterministic: bool,
        mut supplied: BTreeMap<EmbeddingKey, EmbeddingTable>,
    ) -> Result<Self> {
        cfg.validate()?;
        let env = Environment::new(cfg)?;
        let keys: Vec<EmbeddingKey> = cfg
            .seeds
            .iter()
            .flat_map(|&seed| {
                cfg.methods
                    .iter()
                    .filter(|m| m.embed_mode().is_some())
                    .flat_map(move |&method| {
                        cfg.dims
                            .iter()
                            .map(move |&dim| EmbeddingKey { seed, method, dim })
                    })
            })
            .filter(|k| !supplied.contains_key(k))
            .collect();
        let corpus_seeds: Vec<u64> = if keys.is_empty() {
            vec![]
        } else {
            cfg.seeds.clone()
        };
        let corpora: BTreeMap<u64, Vec<Walk>> = corpus_seeds
            .par_iter()
            .map(|&seed| Ok((seed, meta_training_walks(&env, cfg, seed)?)))
            .collect::<Result<_>>()?;
        let trained: BTreeMap<EmbeddingKey, EmbeddingTable> = keys
            .par_iter()
            .map(|&key| {
                let ecfg = embed_config(cfg, key, deterministic)?;
                let table = train_embeddings(&corpora[&key.seed], &ecfg).map_err(|e| {
                    e.context(format!(
                        "meta-training seed {}, method {}, dim {}",
                        key.seed,
                        key.method.name(),
                        key.dim
                    ))
                })?;
                Ok((key, table))
            })
            .collect::<Result<_>>()?;
        supplied.extend(trained);
        let embeddings = supplied;
        let exact = if cfg.methods.contains(&FeatureKind::ExactSr) {
            let uniform = Policy::uniform(env.mdp.n_states(), env.mdp.n_actions());
            Some(FeatureBasis::exact_sr(&exact_sr(&env.mdp, &uniform)?))
        } else {
            None
        };
        Ok(Bench {
            cfg: cfg.clone(),
            env,
            deterministic,
            embeddings,
            exact,
        })
    }

    pub fn embeddings(&self) -> &BTreeMap<EmbeddingKey, EmbeddingTable> {
        &self.embeddings
    }

    /// Writes each learned table once, as `<method>_d<dim>_seed<seed>.csv`.
    pub fn write_embeddings(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (key, table) in &self.embeddings {
            let path = dir.join(key.file_name());
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = std::io::BufWriter::new(file);
            table.write_csv(&mut out).map_err(|e| Error::io(&path, e))?;
            std::io::Write::flush(&mut out).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn basis(
        &self,
        seed: u64,
        method: FeatureKind,
        dim: Option<usize>,
    ) -> Result<FeatureBasis> {
        let (n_s, n_a) = (self.env.mdp.n_states(), self.env.mdp.n_actions());
        match (method, dim) {
            (FeatureKind::Onehot, _) => Ok(FeatureBasis::onehot(n_s, n_a)),
            (FeatureKind::ExactSr, _) => self
                .exact
                .clone()
                .ok_or_else(|| Error::input("exact-sr is not among the configured methods")),
            (m, Some(dim)) => {
                let table = self
                    .embeddings
                    .get(&EmbeddingKey {
                        seed,
                        method: m,
                        dim,
                    })
                    .ok_or_else(|| {
                        Error::input(format!(
                            "no {} embedding for seed {seed}, dim {dim}",
                            m.name()
                        ))
                    })?;
                FeatureBasis::from_embeddings(m, table, n_s, n_a, self.cfg.missing)
            }
            (m, None) => Err(Error::input(format!("{} needs a dimension", m.name()))),
        }
    }

    fn lspi_config(&self) -> LspiConfig {
        LspiConfig {
            discount: self.cfg.meta_test_discount,
            tol: self.cfg.lspi_tol,
            max_iter: self.cfg.lspi_max_iter,
            ridge: self.cfg.ridge,
        }
    }

    /// Meta-tests one cell and evaluates the resulting greedy policy.
    pub fn cell(&self, cell: &Cell) -> Result<ResultRow> {
        self.fit(cell).map(|(row, _)| row)
    }

    /// [`Bench::cell`], also returning the LSPI solution.
    pub fn fit(&self, cell: &Cell) -> Result<(ResultRow, LspiSolution)> {
        let started = Instant::now();
        let task = self.env.task(&cell.task_id)?;
        let task_ix = task_index(&cell.task_id)? as u64;
        let fb = self.basis(cell.seed, cell.method, cell.dim)?;
        let behavior = Policy::uniform(self.env.mdp.n_states(), self.env.mdp.n_actions());
        let mut sample_rng = rng::stream(cell.seed, streams::META_TEST + task_ix);
        let samples = collect_samples(
            task,
            &behavior,
            cell.episodes,
            self.cfg.meta_test_max_len,
            &mut sample_rng,
        )?;
        let holdout = Holdout {
            task,
            n_episodes: self.cfg.holdout_episodes.max(1),
            max_len: self.cfg.eval_max_len,
            seed: cell.seed.wrapping_add(task_ix << 32),
        };
        let sol = lspi(&samples, &fb, &self.lspi_config(), Some(holdout))?;
        let mut eval_rng = rng::stream(cell.seed, streams::EVAL + task_ix);
        let returns = episode_returns(
            task,
            &sol.policy,
            self.cfg.eval_episodes,
            self.cfg.eval_max_len,
            &mut eval_rng,
        )?;
        let (mean, std) = mean_std(&returns);
        let row = ResultRow {
            seed: cell.seed,
            task_id: cell.task_id.clone(),
            method: cell.method.name().to_string(),
            dim: cell.dim.unwrap_or(fb.dim()),
            meta_test_episodes: cell.episodes,
            mean_return: mean,
            std_return: std,
            lspi_iterations: sol.iterations,
            wall_time_ms: if self.deterministic {
                0
            } else {
                started.elapsed().as_millis() as u64
            },
        };
        Ok((row, sol))
    }

    fn cells(&self, budgets: &[usize]) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &episodes in budgets {
            for &seed in &self.cfg.seeds {
                for (task_id, _) in &self.env.tasks {
                    for &method in &self.cfg.methods {
                        for dim in self.cfg.dims_for(method) {
                            cells.push(Cell {
                                seed,
                                task_id: task_id.clone(),
                                method,
                                dim,
                                episodes,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    fn run_cells(&self, cells: &[Cell]) -> Result<Vec<ResultRow>> {
        let mut rows = cells
            .par_iter()
            .map(|c| self.cell(c).map_err(|e| e.context(c.to_string())))
            .collect::<Result<Vec<_>>>()?;
        sort_rows(&mut rows);
        Ok(rows)
    }

    /// One row per `(seed, task, method, dim)` at the configured episode budget.
    pub fn run(&self) -> Result<Vec<ResultRow>> {
        self.run_cells(&self.cells(&[self.cfg.meta_test_episodes]))
    }

    /// One row per `(budget, seed, task, method, dim)`. Smaller budgets see a
    /// prefix of the episodes of larger ones.
    pub fn sweep(&self, budgets: &[usize]) -> Result<Vec<ResultRow>> {
        check_budgets(budgets)?;
        self.run_cells(&self.cells(budgets))
    }

    /// Expected return of the value-iteration greedy policy on `task_id`
    /// under the meta-test discount.
    pub fn dp_return(&self, task_id: &str) -> Result<f64> {
        dp_optimal_return(
            self.env.task(task_id)?,
            self.cfg.meta_test_discount,
            self.cfg.eval_max_len,
        )
    }
}

/// Expected return, over uniform starts and episodes capped at `max_len`, of
/// the greedy policy of the optimal Q-values at discount `discount`.
pub fn dp_optimal_return(task: &Task, discount: f64, max_len: usize) -> Result<f64> {
    let relabeled = Task::new(
        task.label(),
        &task.mdp().with_discount(discount)?,
        task.reward().clone(),
        task.terminal().to_vec(),
    )?
    .with_start_states(task.start_states().to_vec())?;
    let q = value_iteration(&relabeled, 1e-10, 1_000_000)?;
    expected_return(&relabeled, &q.greedy_policy(), max_len)
}

fn check_budgets(budgets: &[usize]) -> Result<()> {
    if budgets.is_empty() {
        return Err(Error::input("no episode budgets given"));
    }
    if budgets.contains(&0) {
        return Err(Error::input("episode budget 0 is not allowed"));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("episode budgets must be strictly ascending"));
    }
    Ok(())
}

/// One `(seed, task, method, dim, budget)` grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub seed: u64,
    pub task_id: String,
    pub method: FeatureKind,
    pub dim: Option<usize>,
    pub episodes: usize,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "seed {}, task {}, method {}",
            self.seed,
            self.task_id,
            self.method.name()
        )?;
        if let Some(d) = self.dim {
            write!(f, ", dim {d}")?;
        }
        write!(f, ", {} episodes", self.episodes)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Canonical order: seed, task, method, dim, budget.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.seed, &a.task_id, &a.method, a.dim, a.meta_test_episodes).cmp(&(
            b.seed,
            &b.task_id,
            &b.method,
            b.dim,
            b.meta_test_episodes,
        ))
    });
}

pub fn run_bench(cfg: &ExperimentConfig, deterministic: bool) -> Result<Vec<ResultRow>> {
    Bench::new(cfg, deterministic)?.run()
}

pub fn data_size_sweep(
    cfg: &ExperimentConfig,
    budgets: &[usize],
    deterministic: bool,
) -> Result<Vec<ResultRow>> {
    check_budgets(budgets)?;
    Bench::new(cfg, deterministic)?.sweep(budgets)
}

/// Mean of `mean_return` over seeds, keyed by `(task, method, dim, budget)`.
pub fn seed_average(rows: &[ResultRow]) -> BTreeMap<(String, String, usize, usize), f64> {
    let mut acc: BTreeMap<_, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc
            .entry((
                r.task_id.clone(),
                r.method.clone(),
                r.dim,
                r.meta_test_episodes,
            ))
            .or_insert((0.0, 0));
        e.0 += r.mean_return;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}
