//! Synthetic feature datasets with controllable label structure.
//!
//! Labels: the diagnosis is uniform over its five classes; each checklist
//! category then lands on its indicative class with probability
//! `label_correlation` when the diagnosis is melanoma, and is uniform over
//! all of its classes otherwise. Features are noisy sums of per-class
//! prototype vectors, so the mapping is learnable but not trivial, and the
//! clinical modality is noisier than the dermoscopic one.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::manifest::{
    write_features, write_manifest, FeatureDataset, FeatureExample, InputKind, Manifest,
    ManifestEntry, Split,
};
use crate::data::schema::{Category, Labels, DIAG_MELANOMA, NUM_CATEGORIES};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Clinical noise scale is `noise`; dermoscopic is half that.
pub const DERM_NOISE_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub feature_dim: usize,
    pub noise: f64,
    pub label_correlation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthExample {
    pub id: String,
    pub derm: Vec<f64>,
    pub clin: Vec<f64>,
    pub labels: Labels,
    pub split: Split,
}

/// Index-based split: first 70% train, next 10% val, remainder test.
pub fn split_for_index(i: usize, n: usize) -> Split {
    if i < n * 7 / 10 {
        Split::Train
    } else if i < n * 7 / 10 + n / 10 {
        Split::Val
    } else {
        Split::Test
    }
}

/// Wrap generated examples as an in-memory feature dataset, exactly what a
/// round trip through a written manifest would load back.
pub fn into_feature_dataset(examples: Vec<SynthExample>) -> FeatureDataset {
    let derm_dim = examples.first().map_or(0, |e| e.derm.len());
    let clin_dim = examples.first().map_or(0, |e| e.clin.len());
    FeatureDataset {
        derm_dim,
        clin_dim,
        examples: examples
            .into_iter()
            .map(|e| FeatureExample {
                id: e.id,
                derm: e.derm,
                clin: e.clin,
                labels: e.labels,
                split: e.split,
            })
            .collect(),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthExample>> {
    if cfg.n == 0 {
        return Err(Error::Config("synthetic dataset needs n > 0".into()));
    }
    if cfg.feature_dim == 0 {
        return Err(Error::Config("feature_dim must be positive".into()));
    }
    if cfg.noise < 0.0 {
        return Err(Error::Config(format!("noise must be >= 0, got {}", cfg.noise)));
    }
    if !(0.0..=1.0).contains(&cfg.label_correlation) {
        return Err(Error::Config(format!(
            "label_correlation must be in [0, 1], got {}",
            cfg.label_correlation
        )));
    }

    // Prototypes are drawn in a fixed order (modality, category, class,
    // coordinate) from their own stream.
    let mut proto_rng = stream(cfg.seed, &["synth-proto"]);
    let mut prototypes = [Vec::new(), Vec::new()];
    for protos in &mut prototypes {
        for cat in Category::ALL {
            let mut per_class = Vec::with_capacity(cat.num_classes());
            for _ in 0..cat.num_classes() {
                let v: Vec<f64> = (0..cfg.feature_dim)
                    .map(|_| StandardNormal.sample(&mut proto_rng))
                    .collect();
                per_class.push(v);
            }
            protos.push(per_class);
        }
    }

    // Labels and noise use separate streams so label sequences do not shift
    // when feature_dim changes.
    let mut label_rng = stream(cfg.seed, &["synth-labels"]);
    let mut noise_rng = stream(cfg.seed, &["synth-noise"]);
    let signal_scale = 1.0 / (NUM_CATEGORIES as f64).sqrt();

    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut classes = [0usize; NUM_CATEGORIES];
        classes[0] = label_rng.random_range(0..Category::Diag.num_classes());
        let melanoma = classes[0] == DIAG_MELANOMA;
        for (k, cat) in Category::ALL.iter().enumerate().skip(1) {
            let forced = melanoma && label_rng.random_bool(cfg.label_correlation);
            classes[k] = if forced {
                cat.indicative_class().expect("non-diagnosis category")
            } else {
                label_rng.random_range(0..cat.num_classes())
            };
        }
        let labels = Labels::new(classes).expect("classes drawn in range");

        let mut features = [Vec::new(), Vec::new()];
        for (m, feat) in features.iter_mut().enumerate() {
            let sigma = cfg.noise * if m == 0 { DERM_NOISE_FACTOR } else { 1.0 };
            let mut x = vec![0.0; cfg.feature_dim];
            for (k, class) in classes.iter().enumerate() {
                for (xi, pi) in x.iter_mut().zip(&prototypes[m][k][*class]) {
                    *xi += pi * signal_scale;
                }
            }
            for xi in &mut x {
                let draw: f64 = StandardNormal.sample(&mut noise_rng);
                *xi += sigma * draw;
            }
            *feat = x;
        }
        let [derm, clin] = features;

        out.push(SynthExample {
            id: format!("synth-{i:05}"),
            derm,
            clin,
            labels,
            split: split_for_index(i, cfg.n),
        });
    }
    Ok(out)
}

/// Write feature files plus a manifest under `dir`. Returns the manifest
/// path.
pub fn write_dataset(dir: &Path, examples: &[SynthExample]) -> Result<PathBuf> {
    let feature_dir = dir.join("features");
    std::fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;
    let mut entries = Vec::with_capacity(examples.len());
    for ex in examples {
        let derm_rel = PathBuf::from("features").join(format!("{}-derm.gfv", ex.id));
        let clin_rel = PathBuf::from("features").join(format!("{}-clin.gfv", ex.id));
        write_features(&dir.join(&derm_rel), &ex.derm)?;
        write_features(&dir.join(&clin_rel), &ex.clin)?;
        entries.push(ManifestEntry {
            id: ex.id.clone(),
            derm: derm_rel,
            clin: clin_rel,
            labels: ex.labels,
            split: ex.split,
        });
    }
    let manifest = Manifest {
        kind: InputKind::Features,
        entries,
        root: dir.to_path_buf(),
    };
    let path = dir.join("manifest.csv");
    write_manifest(&path, &manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::{load_feature_dataset, read_manifest};

    fn cfg() -> SynthConfig {
        SynthConfig {
            n: 40,
            feature_dim: 16,
            noise: 0.3,
            label_correlation: 0.9,
            seed: 123,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&cfg()).unwrap();
        let b = generate(&cfg()).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.labels, y.labels);
            assert_eq!(x.derm, y.derm);
            assert_eq!(x.clin, y.clin);
        }
    }

    #[test]
    fn labels_do_not_depend_on_feature_dim() {
        let a = generate(&cfg()).unwrap();
        let mut wide = cfg();
        wide.feature_dim = 64;
        let b = generate(&wide).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.labels, y.labels);
        }
    }

    #[test]
    fn split_fractions() {
        let n = 100;
        let examples = generate(&SynthConfig { n, ..cfg() }).unwrap();
        let count = |s: Split| examples.iter().filter(|e| e.split == s).count();
        assert_eq!(count(Split::Train), 70);
        assert_eq!(count(Split::Val), 10);
        assert_eq!(count(Split::Test), 20);
    }

    #[test]
    fn full_correlation_forces_indicative_classes_for_melanoma() {
        let examples = generate(&SynthConfig {
            n: 200,
            label_correlation: 1.0,
            ..cfg()
        })
        .unwrap();
        let melanomas = examples
            .iter()
            .filter(|e| e.labels.class(Category::Diag) == DIAG_MELANOMA);
        let mut seen = 0;
        for ex in melanomas {
            seen += 1;
            for cat in &Category::ALL[1..] {
                assert_eq!(ex.labels.class(*cat), cat.indicative_class().unwrap());
            }
        }
        assert!(seen > 10, "melanoma should appear about a fifth of the time");
    }

    #[test]
    fn zero_noise_makes_features_a_function_of_labels() {
        let examples = generate(&SynthConfig {
            n: 300,
            noise: 0.0,
            label_correlation: 0.0,
            ..cfg()
        })
        .unwrap();
        for a in &examples {
            for b in &examples {
                if a.labels == b.labels {
                    assert_eq!(a.derm, b.derm);
                    assert_eq!(a.clin, b.clin);
                }
            }
        }
    }

    #[test]
    fn dataset_roundtrips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let examples = generate(&cfg()).unwrap();
        let manifest_path = write_dataset(dir.path(), &examples).unwrap();
        let manifest = read_manifest(&manifest_path).unwrap();
        let ds = load_feature_dataset(&manifest).unwrap();
        assert_eq!(ds.derm_dim, 16);
        assert_eq!(ds.clin_dim, 16);
        assert_eq!(ds.examples.len(), examples.len());
        for (a, b) in ds.examples.iter().zip(&examples) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.derm, b.derm);
            assert_eq!(a.clin, b.clin);
            assert_eq!(a.split, b.split);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(&SynthConfig { n: 0, ..cfg() }).is_err());
        assert!(generate(&SynthConfig { noise: -0.1, ..cfg() }).is_err());
        assert!(generate(&SynthConfig { label_correlation: 1.5, ..cfg() }).is_err());
        assert!(generate(&SynthConfig { feature_dim: 0, ..cfg() }).is_err());
    }
}
