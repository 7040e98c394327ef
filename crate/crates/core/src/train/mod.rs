//! Synthetic data, SGD, teacher pretraining and the distillation loop.

mod data;
mod metrics;
mod run;
mod sgd;
mod store;
pub mod synth;

pub use data::PreparedData;
pub use metrics::{
    class_logits_csv, class_mean_logits, evaluate, Evaluation, MetricsLog, MetricsRow, METRICS_HEADER,
    WEIGHTS_HEADER,
};
pub use run::{
    distill, distill_observed, eval_top_k, pretrain_teacher, DistillOutcome, DistillRunOptions, FusionMode, PretrainRow,
};
pub use sgd::{Sgd, TrainConfig};
pub use store::{load_dataset, prepare_dir, save_dataset, MANIFEST_HEADER};
pub use synth::{generate, Dataset, Sample, Split, SyntheticSpec};


use crate::models::CheckpointError;
use crate::numcore::TensorError;
use crate::textguide::EmbeddingError;
use crate::viewgen::ViewError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("missing embeddings: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("dataset {path}: {detail}")]
    Dataset { path: String, detail: String },
    #[error("numeric divergence at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
