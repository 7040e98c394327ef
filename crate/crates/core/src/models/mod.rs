//! Toy MLP teacher and student networks, projectors and checkpoints.

pub mod checkpoint;
mod gradcheck;
mod layers;
mod mlp;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use gradcheck::param_gradient_errors;
pub use layers::{store_grads, BoundLinear, Linear, Module};
pub use mlp::{
    teacher_logits_from_fused, teacher_multiview_forward, BoundMlp, MlpNet, MultiViewBatch, Role,
    ViewOutput, STUDENT_HIDDEN, TEACHER_HIDDEN,
};

/// A single affine map into a shared embedding space.
pub type Projector = Linear;
