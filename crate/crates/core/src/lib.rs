//! Exhaustive descriptor retrieval and benchmark scoring for image retrieval.
//!
//! The pipeline is: load a [`store::DescriptorSet`], fit and apply a
//! [`normalize::FittedNormalizer`], rank with [`search::batch_search`] under a
//! [`metrics::MetricId`], and score the rankings against a
//! [`eval::GroundTruth`] produced by one of the [`datasets`] parsers.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
mod kernels;
pub mod metrics;
pub mod normalize;
pub mod search;
pub mod store;

pub use error::{Error, Result};
pub use kernels::Element;
pub use metrics::{distance, distance_batch, MetricId};
pub use normalize::{FittedNormalizer, NormalizationSpec, Scheme};
pub use search::{batch_search, top_k, Depth, RankedList};
pub use store::{read_store, write_store, DescriptorMatrix, DescriptorSet};
