//! Deterministic experiment grid: meta-train once per seed, meta-test every
//! task, write CSV.

mod config;
mod output;
mod run;

pub use config::ExperimentConfig;
pub use output::{
    embedding_pca, emit_csv, emit_pca, format_pca, format_results, parse_results, sr_pca, PcaRow,
    ResultRow, PCA_HEADER, RESULTS_HEADER,
};
pub use run::{
    data_size_sweep, dp_optimal_return, embed_config, meta_training_walks, run_bench, seed_average,
    sort_rows, Bench, Cell, EmbeddingKey, Environment,
};
