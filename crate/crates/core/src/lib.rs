//! Comment-section staytime prediction.
//!
//! The crate bundles five base staytime predictors, an embedding-fusion
//! framework that adds LLM-derived video and comment embeddings plus two
//! comment-ranking auxiliary losses, a metric suite, a calibrated synthetic
//! data generator and an experiment harness.

pub mod base_models;
pub mod datagen;
pub mod domain;
pub mod harness;
mod error;
pub mod lcu;
pub mod nn;
pub mod objectives;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/base-models.md")]
    mod base_models {}
    #[doc = include_str!("../../../book/src/lcu.md")]
    mod lcu {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/embedding-tables.md")]
    mod embedding_tables {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
