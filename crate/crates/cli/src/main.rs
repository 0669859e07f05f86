use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use state2vec::bench::{
    data_size_sweep, embed_config, embedding_pca, emit_csv, emit_pca, meta_training_walks, sr_pca,
    Bench, Cell, EmbeddingKey, Environment, ExperimentConfig,
};
use state2vec::corpus::{parse_walks, write_walks};
use state2vec::embed::{train_embeddings, EmbeddingTable};
use state2vec::mdp::Policy;
use state2vec::metatest::{write_policy, write_theta, FeatureKind};
use state2vec::oracle::exact_sr;
use state2vec::{Error, Result};

/// Reward-agnostic state-action embeddings for fast per-task RL.
#[derive(Parser, Debug)]
#[command(name = "state2vec", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run with this seed only.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single-worker training and zero wall times, for byte-identical output.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collect the meta-training walk corpus.
    Collect,
    /// Train embeddings from a corpus.
    Train {
        /// Corpus written by `collect`; collected afresh when omitted.
        #[arg(long)]
        walks: Option<PathBuf>,
        #[command(flatten)]
        pick: Pick,
    },
    /// Project per-state vectors onto two principal components.
    Pca {
        /// Embedding CSV; trained from the config when omitted.
        #[arg(long, conflicts_with = "exact_sr")]
        embeddings: Option<PathBuf>,
        /// Use exact successor rows of the uniform policy instead.
        #[arg(long)]
        exact_sr: bool,
        #[command(flatten)]
        pick: Pick,
    },
    /// Fit and evaluate one task.
    Metatest {
        #[arg(long, default_value = "a")]
        task: String,
        /// Embedding CSV; trained from the config when omitted.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        pick: Pick,
    },
    /// Run the full configured grid.
    Bench,
    /// Vary the meta-test episode budget.
    Sweep {
        /// Comma-separated ascending budgets; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
    },
}

#[derive(Args, Debug)]
struct Pick {
    /// Method; defaults to the first configured one.
    #[arg(long)]
    method: Option<String>,
    /// Embedding dimension; defaults to the first configured one.
    #[arg(long)]
    dim: Option<usize>,
}

struct Run {
    cfg: ExperimentConfig,
    deterministic: bool,
}

impl Run {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &common.out {
            cfg.out_dir = out.clone();
        }
        Ok(Run {
            cfg,
            deterministic: common.deterministic,
        })
    }

    fn seed(&self) -> u64 {
        self.cfg.seeds[0]
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn key(&self, pick: &Pick, need_embedding: bool) -> Result<(FeatureKind, Option<usize>)> {
        let method = match &pick.method {
            Some(m) => FeatureKind::parse(m)?,
            None if need_embedding => *self
                .cfg
                .methods
                .iter()
                .find(|m| m.embed_mode().is_some())
                .unwrap_or(&FeatureKind::State2vec),
            None => self.cfg.methods[0],
        };
        if need_embedding && method.embed_mode().is_none() {
            return Err(Error::input(format!(
                "{} is not an embedding method",
                method.name()
            )));
        }
        let dim = method
            .embed_mode()
            .map(|_| pick.dim.or(self.cfg.dims.first().copied()).unwrap_or(100));
        Ok((method, dim))
    }
}

fn write_text(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_table(path: &Path) -> Result<EmbeddingTable> {
    EmbeddingTable::parse_csv(&read_text(path)?)
        .map_err(|e| e.context(format!("reading {}", path.display())))
}

fn train_table(
    run: &Run,
    env: &Environment,
    method: FeatureKind,
    dim: usize,
    walks: Option<&Path>,
) -> Result<EmbeddingTable> {
    let seed = run.seed();
    let corpus = match walks {
        Some(path) => parse_walks(&read_text(path)?)
            .map_err(|e| e.context(format!("reading {}", path.display())))?,
        None => meta_training_walks(env, &run.cfg, seed)?,
    };
    let key = EmbeddingKey { seed, method, dim };
    train_embeddings(&corpus, &embed_config(&run.cfg, key, run.deterministic)?)
}

fn execute(cli: Cli) -> Result<()> {
    let mut run = Run::new(&cli.common)?;
    match cli.command {
        Command::Collect => {
            let env = Environment::new(&run.cfg)?;
            let walks = meta_training_walks(&env, &run.cfg, run.seed())?;
            let path = run.out(&format!("walks_seed{}.txt", run.seed()));
            write_text(&path, |out| write_walks(&walks, out))?;
            println!("{} walks -> {}", walks.len(), path.display());
        }
        Command::Train { walks, pick } => {
            let env = Environment::new(&run.cfg)?;
            let (method, dim) = run.key(&pick, true)?;
            let dim = dim.expect("embedding methods have a dimension");
            let table = train_table(&run, &env, method, dim, walks.as_deref())?;
            let path = run.out(
                &EmbeddingKey {
                    seed: run.seed(),
                    method,
                    dim,
                }
                .file_name(),
            );
            write_text(&path, |out| table.write_csv(out))?;
            println!(
                "{} tokens x {} -> {}",
                table.len(),
                table.dim(),
                path.display()
            );
        }
        Command::Pca {
            embeddings,
            exact_sr: use_sr,
            pick,
        } => {
            let env = Environment::new(&run.cfg)?;
            let rows = if use_sr {
                let uniform = Policy::uniform(env.mdp.n_states(), env.mdp.n_actions());
                sr_pca(&exact_sr(&env.mdp, &uniform)?, &env.layout)?
            } else {
                let table = match embeddings {
                    Some(path) => load_table(&path)?,
                    None => {
                        let (method, dim) = run.key(&pick, true)?;
                        train_table(&run, &env, method, dim.expect("embedding dimension"), None)?
                    }
                };
                embedding_pca(&table, &env.layout, env.mdp.n_actions(), run.cfg.missing)?
            };
            let path = run.out("pca.csv");
            emit_pca(&rows, &path)?;
            println!("{} states -> {}", rows.len(), path.display());
        }
        Command::Metatest {
            task,
            embeddings,
            pick,
        } => {
            let (method, dim) = run.key(&pick, false)?;
            run.cfg.tasks = vec![task.clone()];
            run.cfg.methods = vec![method];
            if let Some(d) = dim {
                run.cfg.dims = vec![d];
            }
            run.cfg.validate()?;
            let mut supplied = BTreeMap::new();
            if let (Some(path), Some(dim)) = (&embeddings, dim) {
                supplied.insert(
                    EmbeddingKey {
                        seed: run.seed(),
                        method,
                        dim,
                    },
                    load_table(path)?,
                );
            }
            let bench = Bench::with_embeddings(&run.cfg, run.deterministic, supplied)?;
            let cell = Cell {
                seed: run.seed(),
                task_id: task.clone(),
                method,
                dim,
                episodes: run.cfg.meta_test_episodes,
            };
            let (row, sol) = bench.fit(&cell).map_err(|e| e.context(cell.to_string()))?;
            write_text(&run.out("theta.csv"), |out| write_theta(&sol.theta, out))?;
            write_text(&run.out("policy.csv"), |out| {
                write_policy(&sol.actions, out)
            })?;
            emit_csv(std::slice::from_ref(&row), &run.out("result.csv"))?;
            println!(
                "task {} {}: mean return {:.3} (sd {:.3}), {} LSPI iterations{}",
                row.task_id,
                row.method,
                row.mean_return,
                row.std_return,
                row.lspi_iterations,
                if sol.converged { "" } else { ", not converged" }
            );
        }
        Command::Bench => {
            let bench = Bench::new(&run.cfg, run.deterministic)?;
            let rows = bench.run()?;
            bench.write_embeddings(&run.out("embeddings"))?;
            let path = run.out("results.csv");
            emit_csv(&rows, &path)?;
            println!("{} rows -> {}", rows.len(), path.display());
        }
        Command::Sweep { budgets } => {
            let budgets = budgets.unwrap_or_else(|| run.cfg.budgets.clone());
            let rows = data_size_sweep(&run.cfg, &budgets, run.deterministic)?;
            let path = run.out("sweep.csv");
            emit_csv(&rows, &path)?;
            println!("{} rows -> {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
