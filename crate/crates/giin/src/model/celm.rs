//! Per-category embedding units.
//!
//! Each unit owns an affine map from a modality's feature vector to the
//! shared embedding width (no nonlinearity), plus an auxiliary classifier
//! head over its category's classes. Sixteen independent units cover the
//! eight categories of both modalities; none share weights.

use crate::autodiff::{Graph, InitScheme, Node, ParamId, ParamStore};
use crate::data::schema::Category;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct CelmUnit {
    pub category: Category,
    w0: ParamId,
    b0: ParamId,
    w1: ParamId,
    b1: ParamId,
}

impl CelmUnit {
    /// Register parameters under `celm.<modality>.<category>.*`: a Glorot
    /// embedding matrix with zero bias and a Glorot classifier with zero
    /// bias.
    pub fn register(
        ps: &mut ParamStore,
        modality: &str,
        category: Category,
        input_dim: usize,
        embed_dim: usize,
        seed: u64,
    ) -> Result<CelmUnit> {
        let prefix = format!("celm.{modality}.{}", category.name());
        let w0 = ps.register(
            &format!("{prefix}.w0"),
            &[embed_dim, input_dim],
            InitScheme::Glorot,
            seed,
        )?;
        let b0 = ps.register(&format!("{prefix}.b0"), &[embed_dim], InitScheme::Zero, seed)?;
        let classes = category.num_classes();
        let w1 = ps.register(
            &format!("{prefix}.w1"),
            &[classes, embed_dim],
            InitScheme::Glorot,
            seed,
        )?;
        let b1 = ps.register(&format!("{prefix}.b1"), &[classes], InitScheme::Zero, seed)?;
        Ok(CelmUnit {
            category,
            w0,
            b0,
            w1,
            b1,
        })
    }

    /// Category embedding: a pure affine map of the input features.
    pub fn embed(&self, g: &mut Graph, x: Node) -> Result<Node> {
        let w = g.param(self.w0)?;
        let b = g.param(self.b0)?;
        g.affine(w, b, x)
    }

    /// Auxiliary classifier logits over this category's classes.
    pub fn aux_logits(&self, g: &mut Graph, h: Node) -> Result<Node> {
        let w = g.param(self.w1)?;
        let b = g.param(self.b1)?;
        g.affine(w, b, h)
    }
}
