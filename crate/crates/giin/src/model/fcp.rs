//! Final per-category prediction heads.
//!
//! One head per category: two stacked affine layers producing class logits.
//! There is no activation between the layers by default; an optional
//! exponential linear unit can be switched in for experiments.

use crate::autodiff::{Graph, InitScheme, Node, ParamId, ParamStore};
use crate::data::schema::Category;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct FcpUnit {
    pub category: Category,
    w0: ParamId,
    b0: ParamId,
    w1: ParamId,
    b1: ParamId,
    hidden_elu: bool,
}

impl FcpUnit {
    /// Register parameters under `fcp.<category>.*`: Glorot weights, zero
    /// biases.
    pub fn register(
        ps: &mut ParamStore,
        category: Category,
        input_dim: usize,
        hidden_dim: usize,
        hidden_elu: bool,
        seed: u64,
    ) -> Result<FcpUnit> {
        let prefix = format!("fcp.{}", category.name());
        let w0 = ps.register(
            &format!("{prefix}.w0"),
            &[hidden_dim, input_dim],
            InitScheme::Glorot,
            seed,
        )?;
        let b0 = ps.register(&format!("{prefix}.b0"), &[hidden_dim], InitScheme::Zero, seed)?;
        let classes = category.num_classes();
        let w1 = ps.register(
            &format!("{prefix}.w1"),
            &[classes, hidden_dim],
            InitScheme::Glorot,
            seed,
        )?;
        let b1 = ps.register(&format!("{prefix}.b1"), &[classes], InitScheme::Zero, seed)?;
        Ok(FcpUnit {
            category,
            w0,
            b0,
            w1,
            b1,
            hidden_elu,
        })
    }

    pub fn logits(&self, g: &mut Graph, x: Node) -> Result<Node> {
        let w0 = g.param(self.w0)?;
        let b0 = g.param(self.b0)?;
        let mut h = g.affine(w0, b0, x)?;
        if self.hidden_elu {
            h = g.elu(h);
        }
        let w1 = g.param(self.w1)?;
        let b1 = g.param(self.b1)?;
        g.affine(w1, b1, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn logit_arity_matches_category() {
        let mut ps = ParamStore::new();
        let unit = FcpUnit::register(&mut ps, Category::Bwv, 10, 6, false, 3).unwrap();
        let mut g = Graph::with_params(&ps);
        let x = g.input(Tensor::vector(vec![0.5; 10]));
        let z = unit.logits(&mut g, x).unwrap();
        assert_eq!(g.value(z).len(), 2);
        assert_eq!(ps.value(ps.lookup("fcp.BWV.w0").unwrap()).shape(), &[6, 10]);
        assert_eq!(ps.value(ps.lookup("fcp.BWV.w1").unwrap()).shape(), &[2, 6]);
    }

    #[test]
    fn default_head_is_affine_end_to_end() {
        let mut ps = ParamStore::new();
        let unit = FcpUnit::register(&mut ps, Category::Diag, 5, 4, false, 11).unwrap();
        let mut g = Graph::with_params(&ps);
        let zero = g.input(Tensor::vector(vec![0.0; 5]));
        let x = g.input(Tensor::vector(vec![0.2, -0.4, 1.0, 0.7, -1.1]));
        let x2 = g.input(Tensor::vector(vec![0.4, -0.8, 2.0, 1.4, -2.2]));
        let f0 = unit.logits(&mut g, zero).unwrap();
        let f1 = unit.logits(&mut g, x).unwrap();
        let f2 = unit.logits(&mut g, x2).unwrap();
        for i in 0..5 {
            let base = g.value(f0).data()[i];
            let lhs = g.value(f2).data()[i] - base;
            let rhs = 2.0 * (g.value(f1).data()[i] - base);
            assert!((lhs - rhs).abs() < 1e-12, "coordinate {i}");
        }
    }

    #[test]
    fn optional_elu_breaks_affineness() {
        let mut ps = ParamStore::new();
        let unit = FcpUnit::register(&mut ps, Category::Diag, 5, 4, true, 11).unwrap();
        let mut g = Graph::with_params(&ps);
        let zero = g.input(Tensor::vector(vec![0.0; 5]));
        let x = g.input(Tensor::vector(vec![0.2, -0.4, 1.0, 0.7, -1.1]));
        let x2 = g.input(Tensor::vector(vec![0.4, -0.8, 2.0, 1.4, -2.2]));
        let f0 = unit.logits(&mut g, zero).unwrap();
        let f1 = unit.logits(&mut g, x).unwrap();
        let f2 = unit.logits(&mut g, x2).unwrap();
        let mut max_violation = 0.0f64;
        for i in 0..5 {
            let base = g.value(f0).data()[i];
            let lhs = g.value(f2).data()[i] - base;
            let rhs = 2.0 * (g.value(f1).data()[i] - base);
            max_violation = max_violation.max((lhs - rhs).abs());
        }
        assert!(max_violation > 1e-6, "hidden nonlinearity had no effect");
    }
}
