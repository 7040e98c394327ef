//! Text-guided view weighting: prompt embedding tables, the two-layer weight
//! generator and weighted fusion of per-view teacher features.

mod embeddings;
mod weightnet;

pub use embeddings::{
    embedding_key, load_embeddings, write_embeddings, EmbeddingTable, PromptTemplateSet, MAGIC,
    VERSION,
};
pub use weightnet::{fuse_features, BoundWeightNet, FusionWeights, WeightNet, DEFAULT_HIDDEN};

#[cfg(test)]
mod tests;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding file offset {offset}{}: {detail}", record.map(|r| format!(" (record {r})")).unwrap_or_default())]
    Parse {
        offset: usize,
        record: Option<usize>,
        detail: String,
    },
    #[error("duplicate embedding key {key:?} at record {record}")]
    DuplicateKey { record: usize, key: String },
    #[error("embedding {key:?} has dimension {found}, table dimension is {expected}")]
    DimMismatch {
        key: String,
        expected: usize,
        found: usize,
    },
    #[error("missing embedding {0}")]
    MissingKey(String),
    #[error("prompt template {0:?} must contain {{class}} exactly once")]
    Template(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;
