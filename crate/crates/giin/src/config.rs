//! Run configuration: a flat `key=value` format that round-trips exactly.
//!
//! A config file may set any subset of keys; unset keys keep their
//! defaults. The audit rendering additionally lists every derived constant
//! that shapes a run (head counts, widths, activation, initialization), as
//! comments so the output is itself a valid config file.

use std::path::Path;

use crate::autodiff::{AdamHyper, InitScheme};
use crate::error::{Error, Result};
use crate::model::{
    dims_for_scale, GraphVariant, Mode, ModelConfig, ATTENTION_SLOPE, GAT1_HEADS, GAT2_HEADS,
};
use crate::train::{LossWeights, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub variant: GraphVariant,
    pub scale: f64,
    /// Zero means take the width from the dataset.
    pub derm_dim: usize,
    pub clin_dim: usize,
    pub extractor: bool,
    pub fcp_hidden_elu: bool,
    /// Square side images are resized to before the extractor.
    pub image_size: usize,
    pub augment: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda_derm: f64,
    pub lambda_clin: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Full,
            variant: GraphVariant::DermToClin,
            scale: 1.0,
            derm_dim: 0,
            clin_dim: 0,
            extractor: false,
            fcp_hidden_elu: false,
            image_size: 64,
            augment: true,
            epochs: 100,
            batch_size: 4,
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda_derm: 0.5,
            lambda_clin: 0.5,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn to_text(&self) -> String {
        format!(
            "mode={}\nvariant={}\nscale={}\nderm_dim={}\nclin_dim={}\nextractor={}\n\
             fcp_hidden_elu={}\nimage_size={}\naugment={}\nepochs={}\nbatch_size={}\n\
             lr={}\nbeta1={}\nbeta2={}\nepsilon={}\nlambda_derm={}\nlambda_clin={}\nseed={}\n",
            self.mode.name(),
            self.variant.name(),
            self.scale,
            self.derm_dim,
            self.clin_dim,
            self.extractor,
            self.fcp_hidden_elu,
            self.image_size,
            self.augment,
            self.epochs,
            self.batch_size,
            self.lr,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.lambda_derm,
            self.lambda_clin,
            self.seed,
        )
    }

    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            seen.push(key.to_string());
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text)
    }

    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
        }
        match key {
            "mode" => self.mode = Mode::from_name(value)?,
            "variant" => self.variant = GraphVariant::from_name(value)?,
            "scale" => self.scale = parse(key, value)?,
            "derm_dim" => self.derm_dim = parse(key, value)?,
            "clin_dim" => self.clin_dim = parse(key, value)?,
            "extractor" => self.extractor = parse(key, value)?,
            "fcp_hidden_elu" => self.fcp_hidden_elu = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "augment" => self.augment = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "lambda_derm" => self.lambda_derm = parse(key, value)?,
            "lambda_clin" => self.lambda_clin = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        dims_for_scale(self.scale)?;
        for (name, v) in [
            ("lr", self.lr),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
            ("lambda_derm", self.lambda_derm),
            ("lambda_clin", self.lambda_clin),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("beta1 and beta2 must be below one".into()));
        }
        Ok(())
    }

    /// Model wiring for a dataset with the given feature widths. Explicit
    /// config widths win; zero defers to the dataset.
    pub fn model_config(&self, data_derm_dim: usize, data_clin_dim: usize) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            variant: self.variant,
            scale: self.scale,
            derm_dim: if self.derm_dim != 0 { self.derm_dim } else { data_derm_dim },
            clin_dim: if self.clin_dim != 0 { self.clin_dim } else { data_clin_dim },
            use_extractor: self.extractor,
            fcp_hidden_elu: self.fcp_hidden_elu,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamHyper {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.epsilon,
            },
            loss: LossWeights {
                lambda_derm: self.lambda_derm,
                lambda_clin: self.lambda_clin,
            },
            seed: self.seed,
        }
    }

    /// Full accounting of a run: every settable key plus every derived
    /// constant, the latter as comments so the text stays loadable.
    pub fn audit_text(&self) -> Result<String> {
        let dims = dims_for_scale(self.scale)?;
        let mut out = self.to_text();
        out.push_str("# derived\n");
        for (k, v) in [
            ("optimizer", "adam".to_string()),
            ("embed_dim", dims.embed.to_string()),
            ("gat1_heads", GAT1_HEADS.to_string()),
            ("gat1_width", dims.gat1_width.to_string()),
            ("gat2_heads", GAT2_HEADS.to_string()),
            ("gat2_width", dims.gat2_width.to_string()),
            ("fcp_hidden", dims.fcp_hidden.to_string()),
            ("attention_slope", ATTENTION_SLOPE.to_string()),
            ("activation", "elu".to_string()),
            ("weight_init", InitScheme::Glorot.name().to_string()),
            ("conv_init", InitScheme::He.name().to_string()),
            ("bias_init", InitScheme::Zero.name().to_string()),
            ("dropout", "none".to_string()),
        ] {
            out.push_str(&format!("# {k}={v}\n"));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.mode = Mode::Celm;
        cfg.variant = GraphVariant::Inv;
        cfg.scale = 0.25;
        cfg.lr = 3e-4;
        cfg.seed = 42;
        cfg.augment = false;
        let parsed = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.to_text(), cfg.to_text());
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = RunConfig::from_text("scale=0.5\n\n# comment\nseed=9\n").unwrap();
        assert_eq!(cfg.scale, 0.5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.lr, 1e-5);
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        for text in [
            "mode=resnet\n",
            "unknown_key=1\n",
            "scale\n",
            "scale=0\n",
            "seed=1\nseed=2\n",
            "beta1=1.5\n",
            "lr=-1\n",
        ] {
            match RunConfig::from_text(text) {
                Err(Error::Config(_)) => {}
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn defaults_match_the_training_recipe() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.lr, 1e-5);
        assert_eq!((cfg.beta1, cfg.beta2, cfg.epsilon), (0.9, 0.999, 1e-8));
        assert_eq!((cfg.epochs, cfg.batch_size), (100, 4));
        assert_eq!((cfg.lambda_derm, cfg.lambda_clin), (0.5, 0.5));
        assert_eq!(cfg.scale, 1.0);
        assert_eq!(cfg.mode, Mode::Full);
    }

    #[test]
    fn audit_lists_the_fixed_architecture_facts() {
        let audit = RunConfig::default().audit_text().unwrap();
        for needle in [
            "lr=0.00001",
            "beta1=0.9",
            "beta2=0.999",
            "epsilon=0.00000001",
            "batch_size=4",
            "epochs=100",
            "lambda_derm=0.5",
            "lambda_clin=0.5",
            "# gat1_heads=8",
            "# gat2_heads=1",
            "# gat1_width=8",
            "# embed_dim=512",
            "# attention_slope=0.2",
            "# activation=elu",
            "# weight_init=glorot",
            "# conv_init=he",
            "# bias_init=zero",
            "# dropout=none",
            "# optimizer=adam",
        ] {
            assert!(audit.contains(needle), "audit missing {needle}:\n{audit}");
        }
        // The audit doubles as a loadable config.
        let reparsed = RunConfig::from_text(&audit).unwrap();
        assert_eq!(reparsed, RunConfig::default());
    }

    #[test]
    fn model_config_defers_dims_to_data_only_when_unset() {
        let mut cfg = RunConfig::default();
        let mc = cfg.model_config(10, 12);
        assert_eq!((mc.derm_dim, mc.clin_dim), (10, 12));
        cfg.derm_dim = 7;
        let mc = cfg.model_config(10, 12);
        assert_eq!((mc.derm_dim, mc.clin_dim), (7, 12));
    }
}
