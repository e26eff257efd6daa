//! The full network: embedding units per category, attention over a
//! category graph, and per-category prediction heads.
//!
//! Three modes nest into each other. `baseline` feeds concatenated modality
//! features straight to the prediction heads. `celm` inserts the
//! per-category embedding units and their auxiliary classifiers. `full`
//! additionally routes the embeddings through two graph attention layers
//! over a chosen topology before prediction.

pub mod celm;
pub mod extractor;
pub mod fcp;
pub mod gat;
pub mod topology;

pub use celm::CelmUnit;
pub use extractor::ConvExtractor;
pub use fcp::FcpUnit;
pub use gat::{GatLayer, LayerAttention, ATTENTION_SLOPE};
pub use topology::{GraphVariant, Topology};

use crate::autodiff::{Graph, Node, ParamStore};
use crate::data::schema::{Category, NUM_CATEGORIES};
use crate::error::{Error, Result};

pub const GAT1_HEADS: usize = 8;
pub const GAT2_HEADS: usize = 1;
const BASE_EMBED: usize = 512;
const BASE_GAT1_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    Celm,
    Full,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Celm, Mode::Full];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Celm => "celm",
            Mode::Full => "full",
        }
    }

    pub fn from_name(s: &str) -> Result<Mode> {
        Mode::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }
}

/// Widths derived from the scale knob. Head counts never scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub embed: usize,
    pub gat1_width: usize,
    pub gat2_width: usize,
    pub fcp_hidden: usize,
}

pub fn scaled(base: usize, scale: f64) -> usize {
    (base as f64 * scale).round() as usize
}

pub fn dims_for_scale(scale: f64) -> Result<ModelDims> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    let embed = scaled(BASE_EMBED, scale);
    if embed == 0 {
        return Err(Error::Config(format!(
            "scale {scale} collapses the embedding width to zero"
        )));
    }
    Ok(ModelDims {
        embed,
        gat1_width: scaled(BASE_GAT1_WIDTH, scale).max(1),
        gat2_width: embed,
        fcp_hidden: embed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub variant: GraphVariant,
    pub scale: f64,
    /// Raw feature widths per modality; ignored when the extractor is on.
    pub derm_dim: usize,
    pub clin_dim: usize,
    /// Learn features from images instead of consuming precomputed vectors.
    pub use_extractor: bool,
    pub fcp_hidden_elu: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn dims(&self) -> Result<ModelDims> {
        dims_for_scale(self.scale)
    }

    fn validate(&self) -> Result<ModelDims> {
        let dims = self.dims()?;
        if !self.use_extractor && (self.derm_dim == 0 || self.clin_dim == 0) {
            return Err(Error::Config(
                "feature inputs need positive derm_dim and clin_dim".into(),
            ));
        }
        Ok(dims)
    }

    /// Widths each modality presents to the rest of the network.
    fn input_dims(&self, dims: &ModelDims) -> (usize, usize) {
        if self.use_extractor {
            (dims.embed, dims.embed)
        } else {
            (self.derm_dim, self.clin_dim)
        }
    }
}

/// One forward evaluation. Logit vectors follow [`Category::ALL`] order;
/// auxiliary vectors are empty in modes without embedding units, and
/// `node_embeddings` / `attention` are empty outside full mode.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub fcp_logits: Vec<Node>,
    pub aux_derm: Vec<Node>,
    pub aux_clin: Vec<Node>,
    /// Post-attention embedding per topology node.
    pub node_embeddings: Vec<Node>,
    /// Attention coefficients, one entry per layer.
    pub attention: Vec<LayerAttention>,
}

pub struct GiinModel {
    pub config: ModelConfig,
    pub dims: ModelDims,
    extract_derm: Option<ConvExtractor>,
    extract_clin: Option<ConvExtractor>,
    celm_derm: Vec<CelmUnit>,
    celm_clin: Vec<CelmUnit>,
    gat1: Option<GatLayer>,
    gat2: Option<GatLayer>,
    pub topology: Option<Topology>,
    fcp: Vec<FcpUnit>,
}

impl GiinModel {
    /// Register every parameter in a fixed order: extractors, dermoscopic
    /// units, clinical units, attention layers, prediction heads. The order
    /// is part of the checkpoint contract.
    pub fn new(ps: &mut ParamStore, config: &ModelConfig) -> Result<GiinModel> {
        let dims = config.validate()?;
        let seed = config.seed;
        let (derm_in, clin_in) = config.input_dims(&dims);
        let uses_clin = !(config.mode == Mode::Full && config.variant == GraphVariant::Single);

        let (extract_derm, extract_clin) = if config.use_extractor {
            let d = ConvExtractor::register(ps, "derm", dims.embed, seed)?;
            let c = if uses_clin {
                Some(ConvExtractor::register(ps, "clin", dims.embed, seed)?)
            } else {
                None
            };
            (Some(d), c)
        } else {
            (None, None)
        };

        let mut celm_derm = Vec::new();
        let mut celm_clin = Vec::new();
        if config.mode != Mode::Baseline {
            for cat in Category::ALL {
                celm_derm.push(CelmUnit::register(ps, "derm", cat, derm_in, dims.embed, seed)?);
            }
            if uses_clin {
                for cat in Category::ALL {
                    celm_clin.push(CelmUnit::register(ps, "clin", cat, clin_in, dims.embed, seed)?);
                }
            }
        }

        let (gat1, gat2, topology) = if config.mode == Mode::Full {
            let topo = Topology::new(config.variant);
            let gat1_in = if config.variant == GraphVariant::Fused {
                2 * dims.embed
            } else {
                dims.embed
            };
            let gat1 = GatLayer::register(ps, "gat1", GAT1_HEADS, gat1_in, dims.gat1_width, seed)?;
            let gat2 = GatLayer::register(
                ps,
                "gat2",
                GAT2_HEADS,
                GAT1_HEADS * dims.gat1_width,
                dims.gat2_width,
                seed,
            )?;
            (Some(gat1), Some(gat2), Some(topo))
        } else {
            (None, None, None)
        };

        let fcp_in = match config.mode {
            Mode::Baseline => derm_in + clin_in,
            Mode::Celm => 2 * dims.embed,
            Mode::Full => {
                if config.variant.is_two_star() {
                    2 * dims.embed
                } else {
                    dims.embed
                }
            }
        };
        let mut fcp = Vec::with_capacity(NUM_CATEGORIES);
        for cat in Category::ALL {
            fcp.push(FcpUnit::register(
                ps,
                cat,
                fcp_in,
                dims.fcp_hidden,
                config.fcp_hidden_elu,
                seed,
            )?);
        }

        Ok(GiinModel {
            config: config.clone(),
            dims,
            extract_derm,
            extract_clin,
            celm_derm,
            celm_clin,
            gat1,
            gat2,
            topology,
            fcp,
        })
    }

    pub fn uses_clin(&self) -> bool {
        !(self.config.mode == Mode::Full && self.config.variant == GraphVariant::Single)
    }

    /// Run the network. `derm` and `clin` are feature vectors, or image
    /// tensors when the extractor is configured. With the single-star
    /// dermoscopic layout, `clin` is accepted and ignored.
    pub fn forward(&self, g: &mut Graph, derm: Node, clin: Node) -> Result<ForwardPass> {
        let derm_x = match &self.extract_derm {
            Some(ex) => ex.forward(g, derm)?,
            None => derm,
        };
        let clin_x = match (&self.extract_clin, self.uses_clin()) {
            (Some(ex), true) => ex.forward(g, clin)?,
            _ => clin,
        };

        if self.config.mode == Mode::Baseline {
            let joint = g.concat(&[derm_x, clin_x])?;
            let mut fcp_logits = Vec::with_capacity(NUM_CATEGORIES);
            for unit in &self.fcp {
                fcp_logits.push(unit.logits(g, joint)?);
            }
            return Ok(ForwardPass {
                fcp_logits,
                aux_derm: Vec::new(),
                aux_clin: Vec::new(),
                node_embeddings: Vec::new(),
                attention: Vec::new(),
            });
        }

        let mut h_derm = Vec::with_capacity(NUM_CATEGORIES);
        let mut aux_derm = Vec::with_capacity(NUM_CATEGORIES);
        for unit in &self.celm_derm {
            let h = unit.embed(g, derm_x)?;
            aux_derm.push(unit.aux_logits(g, h)?);
            h_derm.push(h);
        }
        let mut h_clin = Vec::with_capacity(NUM_CATEGORIES);
        let mut aux_clin = Vec::with_capacity(NUM_CATEGORIES);
        for unit in &self.celm_clin {
            let h = unit.embed(g, clin_x)?;
            aux_clin.push(unit.aux_logits(g, h)?);
            h_clin.push(h);
        }

        let (fcp_inputs, node_embeddings, attention) = match self.config.mode {
            Mode::Celm => {
                let mut ins = Vec::with_capacity(NUM_CATEGORIES);
                for j in 0..NUM_CATEGORIES {
                    ins.push(g.concat(&[h_derm[j], h_clin[j]])?);
                }
                (ins, Vec::new(), Vec::new())
            }
            Mode::Full => {
                let topo = self.topology.as_ref().expect("full mode has a topology");
                let node_inputs: Vec<Node> = match self.config.variant {
                    GraphVariant::Fused => {
                        let mut v = Vec::with_capacity(NUM_CATEGORIES);
                        for j in 0..NUM_CATEGORIES {
                            v.push(g.concat(&[h_derm[j], h_clin[j]])?);
                        }
                        v
                    }
                    GraphVariant::Single => h_derm.clone(),
                    _ => h_derm.iter().chain(&h_clin).copied().collect(),
                };
                let gat1 = self.gat1.as_ref().expect("full mode has attention layers");
                let gat2 = self.gat2.as_ref().expect("full mode has attention layers");
                let (mid, att1) = gat1.forward(g, topo, &node_inputs)?;
                let (out, att2) = gat2.forward(g, topo, &mid)?;
                let mut ins = Vec::with_capacity(NUM_CATEGORIES);
                for j in 0..NUM_CATEGORIES {
                    if self.config.variant.is_two_star() {
                        ins.push(g.concat(&[out[j], out[NUM_CATEGORIES + j]])?);
                    } else {
                        ins.push(out[j]);
                    }
                }
                (ins, out, vec![att1, att2])
            }
            Mode::Baseline => unreachable!("handled above"),
        };

        let mut fcp_logits = Vec::with_capacity(NUM_CATEGORIES);
        for (unit, &input) in self.fcp.iter().zip(&fcp_inputs) {
            fcp_logits.push(unit.logits(g, input)?);
        }
        Ok(ForwardPass {
            fcp_logits,
            aux_derm,
            aux_clin,
            node_embeddings,
            attention,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::rng::stream;
    use rand::Rng;

    fn feature_config(mode: Mode, variant: GraphVariant) -> ModelConfig {
        ModelConfig {
            mode,
            variant,
            scale: 1.0 / 32.0,
            derm_dim: 10,
            clin_dim: 12,
            use_extractor: false,
            fcp_hidden_elu: false,
            seed: 77,
        }
    }

    fn random_features(g: &mut Graph, dim: usize, tag: &str) -> Node {
        let mut rng = stream(99, &["model-test", tag]);
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        g.input(Tensor::vector(v))
    }

    #[test]
    fn dims_track_scale() {
        let d = dims_for_scale(1.0).unwrap();
        assert_eq!((d.embed, d.gat1_width, d.gat2_width, d.fcp_hidden), (512, 8, 512, 512));
        let d = dims_for_scale(0.25).unwrap();
        assert_eq!((d.embed, d.gat1_width), (128, 2));
        let d = dims_for_scale(0.125).unwrap();
        assert_eq!((d.embed, d.gat1_width), (64, 1));
        // Width floors at one head channel even when rounding would kill it.
        let d = dims_for_scale(1.0 / 32.0).unwrap();
        assert_eq!((d.embed, d.gat1_width), (16, 1));
        assert!(dims_for_scale(0.0).is_err());
        assert!(dims_for_scale(1e-4).is_err());
    }

    #[test]
    fn logit_arities_for_every_mode_and_variant() {
        let expect = [5usize, 3, 3, 3, 2, 3, 2, 3];
        let mut cases = vec![
            feature_config(Mode::Baseline, GraphVariant::DermToClin),
            feature_config(Mode::Celm, GraphVariant::DermToClin),
        ];
        for v in GraphVariant::ALL {
            cases.push(feature_config(Mode::Full, v));
        }
        for cfg in cases {
            let mut ps = ParamStore::new();
            let model = GiinModel::new(&mut ps, &cfg).unwrap();
            let mut g = Graph::with_params(&ps);
            let derm = random_features(&mut g, 10, "d");
            let clin = random_features(&mut g, 12, "c");
            let fwd = model.forward(&mut g, derm, clin).unwrap();
            let got: Vec<usize> = fwd.fcp_logits.iter().map(|&n| g.value(n).len()).collect();
            assert_eq!(got, expect, "{:?}/{:?}", cfg.mode, cfg.variant);
        }
    }

    #[test]
    fn tensor_counts_per_mode() {
        let mut ps = ParamStore::new();
        GiinModel::new(&mut ps, &feature_config(Mode::Baseline, GraphVariant::Inv)).unwrap();
        assert_eq!(ps.len(), 32, "eight heads, four tensors each");

        let mut ps = ParamStore::new();
        GiinModel::new(&mut ps, &feature_config(Mode::Celm, GraphVariant::Inv)).unwrap();
        assert_eq!(ps.len(), 96, "plus sixteen embedding units");

        let mut ps = ParamStore::new();
        GiinModel::new(&mut ps, &feature_config(Mode::Full, GraphVariant::Inv)).unwrap();
        assert_eq!(ps.len(), 114, "plus eight and one attention heads");

        let mut ps = ParamStore::new();
        GiinModel::new(&mut ps, &feature_config(Mode::Full, GraphVariant::Single)).unwrap();
        assert_eq!(ps.len(), 82, "single drops the clinical units");
    }

    #[test]
    fn aux_outputs_exist_only_with_embedding_units() {
        let mut ps = ParamStore::new();
        let model =
            GiinModel::new(&mut ps, &feature_config(Mode::Baseline, GraphVariant::Inv)).unwrap();
        let mut g = Graph::with_params(&ps);
        let derm = random_features(&mut g, 10, "d");
        let clin = random_features(&mut g, 12, "c");
        let fwd = model.forward(&mut g, derm, clin).unwrap();
        assert!(fwd.aux_derm.is_empty() && fwd.aux_clin.is_empty());
        assert!(fwd.attention.is_empty());

        let mut ps = ParamStore::new();
        let model =
            GiinModel::new(&mut ps, &feature_config(Mode::Full, GraphVariant::Fused)).unwrap();
        let mut g = Graph::with_params(&ps);
        let derm = random_features(&mut g, 10, "d");
        let clin = random_features(&mut g, 12, "c");
        let fwd = model.forward(&mut g, derm, clin).unwrap();
        assert_eq!(fwd.aux_derm.len(), 8);
        assert_eq!(fwd.aux_clin.len(), 8);
        assert_eq!(fwd.attention.len(), 2);
        assert_eq!(fwd.attention[0].alpha.len(), GAT1_HEADS);
        assert_eq!(fwd.attention[1].alpha.len(), GAT2_HEADS);
        assert_eq!(fwd.node_embeddings.len(), 8);
    }

    #[test]
    fn single_variant_ignores_clinical_features() {
        let mut ps = ParamStore::new();
        let model =
            GiinModel::new(&mut ps, &feature_config(Mode::Full, GraphVariant::Single)).unwrap();
        let mut g = Graph::with_params(&ps);
        let derm = random_features(&mut g, 10, "d");
        let clin_a = random_features(&mut g, 12, "c1");
        let clin_b = random_features(&mut g, 12, "c2");
        let fa = model.forward(&mut g, derm, clin_a).unwrap();
        let fb = model.forward(&mut g, derm, clin_b).unwrap();
        for (x, y) in fa.fcp_logits.iter().zip(&fb.fcp_logits) {
            assert_eq!(g.value(*x).data(), g.value(*y).data());
        }
    }

    #[test]
    fn bridge_direction_blocks_clinical_influence_on_derm_nodes() {
        // Dermoscopic-to-clinical bridges only: the dermoscopic half of the
        // graph never sees clinical values, so its node embeddings are
        // bit-identical under clinical perturbation. The clinical half moves.
        let mut ps = ParamStore::new();
        let model =
            GiinModel::new(&mut ps, &feature_config(Mode::Full, GraphVariant::DermToClin))
                .unwrap();
        let mut g = Graph::with_params(&ps);
        let derm = random_features(&mut g, 10, "d");
        let clin_a = random_features(&mut g, 12, "ca");
        let clin_b = random_features(&mut g, 12, "cb");
        let fa = model.forward(&mut g, derm, clin_a).unwrap();
        let fb = model.forward(&mut g, derm, clin_b).unwrap();
        for j in 0..8 {
            assert_eq!(
                g.value(fa.node_embeddings[j]).data(),
                g.value(fb.node_embeddings[j]).data(),
                "dermoscopic node {j} leaked clinical input"
            );
        }
        let clin_moved = (8..16).any(|j| {
            g.value(fa.node_embeddings[j]).data() != g.value(fb.node_embeddings[j]).data()
        });
        assert!(clin_moved);
    }

    #[test]
    fn extractor_mode_accepts_images() {
        let cfg = ModelConfig {
            use_extractor: true,
            ..feature_config(Mode::Full, GraphVariant::DermToClin)
        };
        let mut ps = ParamStore::new();
        let model = GiinModel::new(&mut ps, &cfg).unwrap();
        let mut g = Graph::with_params(&ps);
        let mut rng = stream(1, &["img"]);
        let mut img = |g: &mut Graph| {
            let data: Vec<f64> = (0..3 * 16 * 24).map(|_| rng.random_range(-1.0..1.0)).collect();
            g.input(Tensor::from_vec(&[3, 16, 24], data).unwrap())
        };
        let derm = img(&mut g);
        let clin = img(&mut g);
        let fwd = model.forward(&mut g, derm, clin).unwrap();
        assert_eq!(fwd.fcp_logits.len(), 8);
    }
}
