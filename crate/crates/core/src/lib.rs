//! Class-incremental fault diagnosis.
//!
//! The pipeline trains a small feature extractor with a supervised
//! contrastive objective plus similarity-distribution distillation from the
//! previous session's frozen copy, keeps a fixed-budget replay memory filled
//! by marginal (boundary-seeking) exemplar selection, and classifies with a
//! balanced random forest fit on exemplar embeddings.
//!
//! Module map:
//!
//! * [`datasets`]: CSV ingestion, scenario construction, synthetic streams, augmentation.
//! * [`encoder`]: MLP feature extractor, frozen teacher snapshots, reverse-mode gradients.
//! * [`losses`]: supervised contrastive loss, similarity distributions, distillation.
//! * [`memory`]: exemplar selection (marginal, herding, random, mixed) and the replay buffer.
//! * [`classifier`]: balanced random forest and the fully connected baseline.
//! * [`session`]: incremental sessions, reports and metric aggregation.
//! * [`experiment`]: TOML experiment configs, run/ablate/gen-synth drivers and report files.

pub mod autodiff;
pub mod classifier;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod experiment;

pub mod losses;
pub mod matrix;
pub mod memory;
pub mod optim;
pub mod rng;
pub mod session;

pub use error::{Error, Result};
