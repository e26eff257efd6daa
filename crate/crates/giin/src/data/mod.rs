//! Dataset handling: label schema, manifests, feature files, images,
//! augmentation, and synthetic data generation.

pub mod augment;
pub mod image;
pub mod manifest;
pub mod schema;
pub mod synth;
