//! Training loop, configuration, checkpoints, and repeated-run statistics.

pub mod checkpoint;
pub mod config;
pub mod train;

pub use checkpoint::{Checkpoint, Tensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{EmbeddingConfig, ProviderKind, TrainConfig, KEYS};
pub use train::{document_loss, repeat_runs, step_rng, train, EpochLog, RunStats, TrainOutcome};

use crate::embedding::{EmbeddingProvider, EmbeddingStore};
use crate::error::{Error, Result};

/// Opens the embedding source named by the config. A file source fixes the
/// model's embedding width.
pub fn open_provider(config: &mut TrainConfig) -> Result<EmbeddingProvider> {
    match config.embeddings.provider {
        ProviderKind::Hash => Ok(EmbeddingProvider::Hash {
            dim: config.model.emb_dim,
            seed: config.embeddings.seed,
        }),
        ProviderKind::File => {
            let path = config
                .embeddings
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("embed.provider = file needs embed.path".into()))?;
            let store = EmbeddingStore::open(path)?;
            config.model.emb_dim = store.dim();
            Ok(EmbeddingProvider::File(store))
        }
    }
}
