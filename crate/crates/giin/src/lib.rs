//! Multilabel skin-lesion classification with per-category embedding units,
//! graph attention over a dual star topology, and per-category prediction
//! heads, all running on a from-scratch reverse-mode autodiff core.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod guide;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
