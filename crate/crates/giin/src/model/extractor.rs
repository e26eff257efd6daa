//! Compact convolutional front end for image inputs.
//!
//! Two strided valid convolutions with exponential linear units, a 1x1
//! projection to the embedding width, and global average pooling. Valid
//! (unpadded) windows mean a constant image produces constant feature maps
//! at every stage, which the derivative checks rely on. The two modalities
//! get independent instances; nothing is shared.

use crate::autodiff::{Graph, InitScheme, Node, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Smallest input that survives both strided 3x3 stages.
pub const MIN_INPUT_EXTENT: usize = 7;

#[derive(Debug, Clone)]
pub struct ConvExtractor {
    conv1_k: ParamId,
    conv1_b: ParamId,
    conv2_k: ParamId,
    conv2_b: ParamId,
    proj_k: ParamId,
    proj_b: ParamId,
}

impl ConvExtractor {
    /// Register parameters under `extract.<modality>.*`: He-initialized
    /// kernels, zero biases. Channel plan is 3 -> 8 -> 16 -> `embed_dim`.
    pub fn register(ps: &mut ParamStore, modality: &str, embed_dim: usize, seed: u64) -> Result<ConvExtractor> {
        let prefix = format!("extract.{modality}");
        let conv1_k = ps.register(&format!("{prefix}.conv1.k"), &[8, 3, 3, 3], InitScheme::He, seed)?;
        let conv1_b = ps.register(&format!("{prefix}.conv1.b"), &[8], InitScheme::Zero, seed)?;
        let conv2_k = ps.register(&format!("{prefix}.conv2.k"), &[16, 8, 3, 3], InitScheme::He, seed)?;
        let conv2_b = ps.register(&format!("{prefix}.conv2.b"), &[16], InitScheme::Zero, seed)?;
        let proj_k = ps.register(
            &format!("{prefix}.proj.k"),
            &[embed_dim, 16, 1, 1],
            InitScheme::He,
            seed,
        )?;
        let proj_b = ps.register(&format!("{prefix}.proj.b"), &[embed_dim], InitScheme::Zero, seed)?;
        Ok(ConvExtractor {
            conv1_k,
            conv1_b,
            conv2_k,
            conv2_b,
            proj_k,
            proj_b,
        })
    }

    /// Image tensor `[3, h, w]` to feature vector `[embed_dim]`.
    pub fn forward(&self, g: &mut Graph, image: Node) -> Result<Node> {
        let shape = g.value(image).shape().to_vec();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(Error::shape("extractor input", &[3, 0, 0], &shape));
        }
        if shape[1] < MIN_INPUT_EXTENT || shape[2] < MIN_INPUT_EXTENT {
            return Err(Error::Domain(format!(
                "extractor needs at least {MIN_INPUT_EXTENT}x{MIN_INPUT_EXTENT} input, got {}x{}",
                shape[1], shape[2]
            )));
        }
        let k1 = g.param(self.conv1_k)?;
        let b1 = g.param(self.conv1_b)?;
        let c1 = g.conv2d(k1, b1, image, 2)?;
        let a1 = g.elu(c1);
        let k2 = g.param(self.conv2_k)?;
        let b2 = g.param(self.conv2_b)?;
        let c2 = g.conv2d(k2, b2, a1, 2)?;
        let a2 = g.elu(c2);
        let kp = g.param(self.proj_k)?;
        let bp = g.param(self.proj_b)?;
        let proj = g.conv2d(kp, bp, a2, 1)?;
        g.global_avg_pool(proj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn output_width_is_embed_dim() {
        let mut ps = ParamStore::new();
        let ex = ConvExtractor::register(&mut ps, "derm", 12, 4).unwrap();
        let mut g = Graph::with_params(&ps);
        let mut rng = stream(4, &["img"]);
        let data: Vec<f64> = (0..3 * 32 * 48).map(|_| rng.random_range(-1.0..1.0)).collect();
        let img = g.input(Tensor::from_vec(&[3, 32, 48], data).unwrap());
        let out = ex.forward(&mut g, img).unwrap();
        assert_eq!(g.value(out).shape(), &[12]);
    }

    #[test]
    fn constant_image_yields_reproducible_features_across_sizes() {
        // Valid convolutions see identical windows everywhere on a constant
        // image, so the pooled features are independent of image size.
        let mut ps = ParamStore::new();
        let ex = ConvExtractor::register(&mut ps, "derm", 6, 9).unwrap();
        let mut g = Graph::with_params(&ps);
        let small = g.input(Tensor::from_vec(&[3, 16, 16], vec![0.37; 3 * 256]).unwrap());
        let large = g.input(Tensor::from_vec(&[3, 33, 21], vec![0.37; 3 * 33 * 21]).unwrap());
        let a = ex.forward(&mut g, small).unwrap();
        let b = ex.forward(&mut g, large).unwrap();
        for (x, y) in g.value(a).data().iter().zip(g.value(b).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn modalities_do_not_share_parameters() {
        let mut ps = ParamStore::new();
        ConvExtractor::register(&mut ps, "derm", 6, 9).unwrap();
        ConvExtractor::register(&mut ps, "clin", 6, 9).unwrap();
        let d = ps.value(ps.lookup("extract.derm.conv1.k").unwrap());
        let c = ps.value(ps.lookup("extract.clin.conv1.k").unwrap());
        assert_ne!(d.data(), c.data());
        assert_eq!(ps.len(), 12);
    }

    #[test]
    fn undersized_input_is_rejected() {
        let mut ps = ParamStore::new();
        let ex = ConvExtractor::register(&mut ps, "derm", 4, 0).unwrap();
        let mut g = Graph::with_params(&ps);
        let img = g.input(Tensor::from_vec(&[3, 6, 10], vec![0.0; 180]).unwrap());
        assert!(ex.forward(&mut g, img).is_err());
    }
}
