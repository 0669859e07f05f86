//! Skip-gram embeddings of state-action walks.

pub mod config;
pub mod loss;
pub mod pca;
pub mod table;
pub mod train;

pub use config::{EmbedConfig, Mode, Objective, TokenMode, Workers};
pub use pca::pca2;
pub use table::{state_vectors, EmbeddingTable, Vocab, VocabKey};
pub use train::{
    corpus_loss, initial_table, mean_score_by_distance, train_embeddings, train_embeddings_with,
};
