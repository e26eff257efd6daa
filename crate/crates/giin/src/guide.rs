//! The user guide, one module per chapter.
//!
//! Each chapter is the exact markdown file mdbook renders from `book/src/`,
//! included here as a doc comment so `cargo test --doc` compiles and runs
//! every code block in the guide. Prose lives in the book; this module only
//! keeps it honest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/topologies.md")]
pub mod topologies {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
