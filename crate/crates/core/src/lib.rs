//! Learning a coordinated multimodal representation space.
//!
//! Two modality encoders are aligned with a contrastive (NCE) objective on
//! unlabeled cross-modal pairs while a single shared classifier is trained on
//! labeled data from either modality. Everything runs on a generative
//! synthetic world of latent concepts, so ground truth is always available.
//!
//! Module map:
//! * [`numkernel`]: tensors, MLP forward/backward, normalization, softmax,
//!   finite-difference checks, seeded random streams.
//! * [`synthworld`]: concept world, manifestation, composition, datasets.
//! * [`encoders`]: per-modality encoders onto the unit sphere.
//! * [`alignspace`]: similarity, alignment probability, negatives, NCE loss.
//! * [`decoders`]: shared classifier and cross-modal retrieval.
//! * [`trainer`]: the alternating align / classify training loop.
//! * [`evalharness`]: fusion, retrieval and co-learning experiments.
//! * [`gradsuite`]: finite-difference checks of every loss path.
//! * [`cli`]: configuration, checkpoints, dataset files and the command line.

pub mod alignspace;
pub mod cli;
pub mod decoders;
pub mod encoders;
pub mod error;
pub mod evalharness;
pub mod gradsuite;
pub mod model;
pub mod numkernel;
pub mod synthworld;
pub mod trainer;

pub use error::{Error, Result};
pub use model::Model;
