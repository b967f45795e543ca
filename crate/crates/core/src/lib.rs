//! Adversarial purification toolkit.
//!
//! The pipeline has three stages:
//!
//! 1. train a baseline classifier, cluster its per-class latent vectors and
//!    learn a convolutional dictionary for every cluster
//!    ([`pipeline::build_srd`]);
//! 2. adversarially train a robust feature extractor whose latents are pulled
//!    toward the clean clusters by a Mahalanobis penalty
//!    ([`net::train_robust`]);
//! 3. purify inputs by splitting them into low and high frequency bands and
//!    re-synthesizing the high band from the sparse code of the closest
//!    cluster's dictionary ([`pipeline::purify`]).

pub mod attack;
pub mod cluster;
pub mod error;
pub mod net;
pub mod pipeline;
pub mod signal;
pub mod sparse;
pub mod tensorio;

pub use error::{Error, Result};
pub use tensorio::{ArtifactBundle, Image, LabeledDataset};
