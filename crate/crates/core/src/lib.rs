//! Text-guided multi-view knowledge distillation at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: f64 tensors and a reverse-mode gradient tape.
//! - [`viewgen`]: edge- and high-frequency-enhanced views of RGB images, PPM and view sidecar I/O.
//! - [`textguide`]: prompt embedding tables, the fusion weight generator and feature fusion.
//! - [`models`]: MLP teacher/student networks, projectors and checkpoints.
//! - [`distill`]: the feature, logit and contrastive distillation losses.
//! - [`train`]: synthetic data, SGD, teacher pretraining, the distillation loop and metrics.
//! - [`config`]: the `key = value` run configuration format.

pub mod numcore;
pub mod viewgen;
pub mod textguide;
pub mod models;
pub mod distill;
pub mod train;
pub mod config;
