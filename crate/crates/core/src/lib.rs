//! Long-tail visual relationship augmentation: taxonomy-driven triplet
//! augmentation, conditional feature-space diffusion, hardness-aware
//! conditioning and curriculum fine-tuning of a reference classifier.

pub mod corpus;
pub mod diffusion;
pub mod encoders;
pub mod error;
pub mod hardness;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod taxonomy;
pub mod vrrmodel;

pub use error::{Error, Result};
