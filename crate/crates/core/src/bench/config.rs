use std::path::{Path, PathBuf};

use crate::embed::TokenMode;
use crate::error::{Error, Result};
use crate::fourrooms::TASK_IDS;
use crate::metatest::{FeatureKind, Missing};

/// One experiment grid, read from a flat `key = value` file.
///
/// | key | default | meaning |
/// |---|---|---|
/// | `env_file` | built-in layout | grid file whose walls define the layout |
/// | `tasks` | `a,b,c,d` | task ids |
/// | `methods` | `state2vec` | `state2vec`, `node2vec`, `onehot`, `exact-sr` |
/// | `dims` | `100` | embedding dimensions |
/// | `seeds` | `0` | master seeds |
/// | `n_walks`, `walk_len` | `300`, `100` | meta-training corpus |
/// | `window`, `discount`, `epochs` | `50`, `0.8`, `5` | embedding training |
/// | `negatives`, `learning_rate`, `min_learning_rate` | `5`, `0.025`, `1e-4` | |
/// | `tokens` | `state-action` | or `state` |
/// | `meta_test_episodes`, `meta_test_max_len` | `50`, `200` | samples per task |
/// | `meta_test_discount`, `ridge` | `0.8`, `1e-6` | LSTDQ |
/// | `lspi_tol`, `lspi_max_iter` | `1e-4`, `30` | |
/// | `holdout_episodes` | `100` | rollouts per iterate when LSPI stalls |
/// | `eval_episodes`, `eval_max_len` | `500`, `200` | evaluation |
/// | `budgets` | `5,10,25,50` | episode budgets for `sweep` |
/// | `missing` | `error` | `zero` substitutes zero vectors for unseen pairs |
/// | `workers` | `1` | embedding threads; more than one is not reproducible |
/// | `out_dir` | `results` | output directory |
///
/// Blank lines and `#` comments are ignored. Lists are comma-separated.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env_file: Option<PathBuf>,
    pub tasks: Vec<String>,
    pub methods: Vec<FeatureKind>,
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_walks: usize,
    pub walk_len: usize,
    pub window: usize,
    pub discount: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub tokens: TokenMode,
    pub meta_test_episodes: usize,
    pub meta_test_max_len: usize,
    pub meta_test_discount: f64,
    pub ridge: f64,
    pub lspi_tol: f64,
    pub lspi_max_iter: usize,
    pub holdout_episodes: usize,
    pub eval_episodes: usize,
    pub eval_max_len: usize,
    pub budgets: Vec<usize>,
    pub missing: Missing,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env_file: None,
            tasks: TASK_IDS.iter().map(|s| s.to_string()).collect(),
            methods: vec![FeatureKind::State2vec],
            dims: vec![100],
            seeds: vec![0],
            n_walks: 300,
            walk_len: 100,
            window: 50,
            discount: 0.8,
            epochs: 5,
            negatives: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            tokens: TokenMode::StateAction,
            meta_test_episodes: 50,
            meta_test_max_len: 200,
            meta_test_discount: 0.8,
            ridge: 1e-6,
            lspi_tol: 1e-4,
            lspi_max_iter: 30,
            holdout_episodes: 100,
            eval_episodes: 500,
            eval_max_len: 200,
            budgets: vec![5, 10, 25, 50],
            missing: Missing::Error,
            workers: 1,
            out_dir: PathBuf::from("results"),
        }
    }
}

fn list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(item)
        .collect()
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::input(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    /// Parses `text`, starting from the defaults. Relative `env_file` and
    /// `out_dir` paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let resolve = |p: &str| match base {
            Some(b) if Path::new(p).is_relative() => b.join(p),
            _ => PathBuf::from(p),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::input(format!("config line {}: expected key = value", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let at = |e: Error| e.context(format!("config line {}", n + 1));
            match key {
                "env_file" => cfg.env_file = Some(resolve(value)),
                "tasks" => cfg.tasks = list(value, |v| Ok(v.to_string())).map_err(at)?,
                "methods" => cfg.methods = list(value, FeatureKind::parse).map_err(at)?,
                "dims" => cfg.dims = list(value, |v| number(key, v)).map_err(at)?,
                "seeds" => cfg.seeds = list(value, |v| number(key, v)).map_err(at)?,
                "budgets" => cfg.budgets = list(value, |v| number(key, v)).map_err(at)?,
                "n_walks" => cfg.n_walks = number(key, value).map_err(at)?,
                "walk_len" => cfg.walk_len = number(key, value).map_err(at)?,
                "window" => cfg.window = number(key, value).map_err(at)?,
                "discount" => cfg.discount = number(key, value).map_err(at)?,
                "epochs" => cfg.epochs = number(key, value).map_err(at)?,
                "negatives" => cfg.negatives = number(key, value).map_err(at)?,
                "learning_rate" => cfg.learning_rate = number(key, value).map_err(at)?,
                "min_learning_rate" => cfg.min_learning_rate = number(key, value).map_err(at)?,
                "tokens" => {
                    cfg.tokens = match value {
                        "state-action" => TokenMode::StateAction,
                        "state" => TokenMode::State,
                        _ => {
                            return Err(at(Error::input(format!("tokens: unknown mode {value:?}"))))
                        }
                    }
                }
                "meta_test_episodes" => cfg.meta_test_episodes = number(key, value).map_err(at)?,
                "meta_test_max_len" => cfg.meta_test_max_len = number(key, value).map_err(at)?,
                "meta_test_discount" => cfg.meta_test_discount = number(key, value).map_err(at)?,
                "ridge" => cfg.ridge = number(key, value).map_err(at)?,
                "lspi_tol" => cfg.lspi_tol = number(key, value).map_err(at)?,
                "lspi_max_iter" => cfg.lspi_max_iter = number(key, value).map_err(at)?,
                "holdout_episodes" => cfg.holdout_episodes = number(key, value).map_err(at)?,
                "eval_episodes" => cfg.eval_episodes = number(key, value).map_err(at)?,
                "eval_max_len" => cfg.eval_max_len = number(key, value).map_err(at)?,
                "missing" => {
                    cfg.missing = match value {
                        "error" => Missing::Error,
                        "zero" => Missing::Zero,
                        _ => {
                            return Err(at(Error::input(format!(
                                "missing: unknown policy {value:?}"
                            ))))
                        }
                    }
                }
                "workers" => cfg.workers = number(key, value).map_err(at)?,
                "out_dir" => cfg.out_dir = resolve(value),
                _ => return Err(at(Error::input(format!("unknown key {key:?}")))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
            .map_err(|e| e.context(format!("reading {}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::input("seeds must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(Error::input("methods must not be empty"));
        }
        if self.tasks.is_empty() {
            return Err(Error::input("tasks must not be empty"));
        }
        for t in &self.tasks {
            if !TASK_IDS.contains(&t.as_str()) {
                return Err(Error::input(format!(
                    "unknown task {t:?}; expected one of a, b, c, d"
                )));
            }
        }
        let embeds = self.methods.iter().any(|m| m.embed_mode().is_some());
        if embeds && (self.dims.is_empty() || self.dims.contains(&0)) {
            return Err(Error::input(
                "dims must be non-empty and positive for embedding methods",
            ));
        }
        if self.meta_test_episodes == 0 || self.eval_episodes == 0 {
            return Err(Error::input("episode budgets must be at least 1"));
        }
        if self.meta_test_max_len == 0 || self.eval_max_len == 0 {
            return Err(Error::input("episode lengths must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::input("workers must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.meta_test_discount) {
            return Err(Error::input("meta_test_discount must be in [0, 1)"));
        }
        Ok(())
    }

    /// Dimensions a method runs at; fixed-size bases run once.
    pub(crate) fn dims_for(&self, method: FeatureKind) -> Vec<Option<usize>> {
        if method.embed_mode().is_some() {
            self.dims.iter().map(|&d| Some(d)).collect()
        } else {
            vec![None]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# grid\nmethods = state2vec, node2vec\ndims = 25,50\nseeds = 1,2,3 # three\ntasks=a\n",
            None,
        )
        .unwrap();
        assert_eq!(
            cfg.methods,
            vec![FeatureKind::State2vec, FeatureKind::Node2vec]
        );
        assert_eq!(cfg.dims, vec![25, 50]);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.tasks, vec!["a"]);
        assert_eq!(cfg.eval_episodes, 500);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("seeds =\n", None).is_err());
        assert!(ExperimentConfig::parse("colour = red\n", None).is_err());
        assert!(ExperimentConfig::parse("tasks = e\n", None).is_err());
        assert!(ExperimentConfig::parse("dims = x\n", None).is_err());
        assert!(ExperimentConfig::parse("methods = word2vec\n", None).is_err());
        assert!(ExperimentConfig::parse("just text\n", None).is_err());
    }

    #[test]
    fn resolves_paths_against_base() {
        let cfg = ExperimentConfig::parse(
            "out_dir = out\nenv_file = /abs/grid.txt\n",
            Some(Path::new("/tmp/x")),
        )
        .unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x/out"));
        assert_eq!(cfg.env_file, Some(PathBuf::from("/abs/grid.txt")));
    }
}
