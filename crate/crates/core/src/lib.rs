//! Shared-prompt cross-attention alignment of multimodal embeddings.
//!
//! Frozen encoder outputs of several modalities are mapped into one space by
//! per-modality attention aligners that all attend to a single set of
//! learnable prompt tokens. New modalities are added later by training only a
//! fresh aligner against an already aligned anchor modality.

mod binio;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod eval;
pub mod extension;
pub mod gradcheck;
pub mod model;
pub mod param;
pub mod rng;
pub mod tensor;

pub use contrastive::{contrastive_loss, ContrastiveConfig};
pub use error::{ErrorKind, Result, SpanerError};
pub use model::{init_model, SpanerModel, TrainConfig};
pub use param::Parameter;
pub use rng::Rng;
pub use tensor::Tensor;
