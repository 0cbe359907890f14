//! Patch-bag multi-tag classification.
//!
//! A bag is the set of patch feature vectors sampled from one slide. The model
//! re-weights every patch with several gated attention heads, adds the
//! weighted views back onto the input through a residual projection, then
//! pools the bag once per tag task with a task-specific attention before
//! classifying each task independently.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`graph`]: dense `f64` tensors and a define-by-run
//!   reverse-mode differentiation tape.
//! * [`model`]: tag schema, parameters, the attention layers and checkpoints.
//! * [`data`]: seeded synthetic bags, splits and the on-disk bag format.
//! * [`preprocess`]: Otsu background removal, patch sampling, augmentation and
//!   a small trainable featurizer for raw images.
//! * [`train`]: multi-task loss, Adam, the training loop, metrics and
//!   attention export.

pub mod data;
pub mod error;
pub mod graph;
pub mod manifest;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use graph::{Graph, NodeId};
pub use tensor::Tensor;
