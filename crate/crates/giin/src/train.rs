//! Optimization loop, joint loss, and split evaluation.
//!
//! Every batch builds a fresh graph over the shared parameter store, takes
//! the mean loss, backpropagates, and applies one Adam step. Shuffling and
//! augmentation draw from named streams, so a run is a pure function of its
//! configuration.

use rand::seq::SliceRandom;

use crate::autodiff::{stable_softmax, AdamHyper, Graph, Node, ParamStore, Tensor};
use crate::data::augment::augment;
use crate::data::image::{read_ppm, resize_bilinear, ChannelStats, Image};
use crate::data::manifest::{FeatureDataset, InputKind, Manifest, Split};
use crate::data::schema::{Category, Labels};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, argmax, macro_auc};
use crate::model::{ForwardPass, GiinModel};
use crate::rng::stream;

/// Mixing weights for the auxiliary per-modality losses. The prediction
/// head loss always enters with weight one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_derm: f64,
    pub lambda_clin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_derm: 0.5, lambda_clin: 0.5 }
    }
}

/// Cross entropy on every head: prediction heads at weight one, auxiliary
/// heads scaled by their lambda. Ignoring a modality's absent heads (single
/// star, baseline) falls out of the empty vectors.
pub fn total_loss(
    g: &mut Graph,
    fwd: &ForwardPass,
    labels: &Labels,
    weights: &LossWeights,
) -> Result<Node> {
    let mut terms = Vec::with_capacity(24);
    for (j, cat) in Category::ALL.iter().enumerate() {
        let ce = g.cross_entropy(fwd.fcp_logits[j], labels.class(*cat))?;
        terms.push((1.0, ce));
    }
    for (j, cat) in Category::ALL.iter().enumerate() {
        if let Some(&aux) = fwd.aux_derm.get(j) {
            let ce = g.cross_entropy(aux, labels.class(*cat))?;
            terms.push((weights.lambda_derm, ce));
        }
    }
    for (j, cat) in Category::ALL.iter().enumerate() {
        if let Some(&aux) = fwd.aux_clin.get(j) {
            let ce = g.cross_entropy(aux, labels.class(*cat))?;
            terms.push((weights.lambda_clin, ce));
        }
    }
    g.lin_comb(&terms)
}

/// Uniform view over feature- and image-backed datasets. `epoch` is `Some`
/// during training, which is the only time augmentation may fire.
pub trait BatchSource {
    fn len(&self) -> usize;
    fn labels(&self, i: usize) -> &Labels;
    fn split(&self, i: usize) -> Split;
    fn fetch(&self, i: usize, epoch: Option<usize>) -> Result<(Tensor, Tensor)>;

    fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split(i) == split).collect()
    }
}

pub struct FeatureSource<'a> {
    data: &'a FeatureDataset,
}

impl<'a> FeatureSource<'a> {
    pub fn new(data: &'a FeatureDataset) -> Self {
        FeatureSource { data }
    }
}

impl BatchSource for FeatureSource<'_> {
    fn len(&self) -> usize {
        self.data.examples.len()
    }

    fn labels(&self, i: usize) -> &Labels {
        &self.data.examples[i].labels
    }

    fn split(&self, i: usize) -> Split {
        self.data.examples[i].split
    }

    fn fetch(&self, i: usize, _epoch: Option<usize>) -> Result<(Tensor, Tensor)> {
        let e = &self.data.examples[i];
        Ok((Tensor::vector(e.derm.clone()), Tensor::vector(e.clin.clone())))
    }
}

/// Raw images held in memory. Training fetches draw one augmentation from a
/// stream keyed by (seed, modality, example id, epoch), then every fetch
/// resizes to a square and normalizes with training-split channel statistics.
pub struct ImageSource {
    ids: Vec<String>,
    derm: Vec<Image>,
    clin: Vec<Image>,
    labels: Vec<Labels>,
    splits: Vec<Split>,
    stats_derm: ChannelStats,
    stats_clin: ChannelStats,
    size: usize,
    seed: u64,
    augment: bool,
}

impl ImageSource {
    pub fn load(manifest: &Manifest, size: usize, seed: u64, augment: bool) -> Result<Self> {
        if manifest.kind != InputKind::Images {
            return Err(Error::Config("manifest references feature vectors, not images".into()));
        }
        if size < crate::model::extractor::MIN_INPUT_EXTENT {
            return Err(Error::Config(format!(
                "image size {size} is below the extractor minimum of {}",
                crate::model::extractor::MIN_INPUT_EXTENT
            )));
        }
        let mut ids = Vec::new();
        let mut derm = Vec::new();
        let mut clin = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for e in &manifest.entries {
            ids.push(e.id.clone());
            derm.push(read_ppm(&manifest.resolve(&e.derm))?);
            clin.push(read_ppm(&manifest.resolve(&e.clin))?);
            labels.push(e.labels.clone());
            splits.push(e.split);
        }
        // Statistics come from the training split; an inference-only
        // manifest falls back to all of its entries.
        let pool: Vec<usize> = {
            let train: Vec<usize> =
                (0..splits.len()).filter(|&i| splits[i] == Split::Train).collect();
            if train.is_empty() { (0..splits.len()).collect() } else { train }
        };
        if pool.is_empty() {
            return Err(Error::Domain("manifest has no examples".into()));
        }
        let resized = |imgs: &[Image]| -> Result<Vec<Image>> {
            pool.iter().map(|&i| resize_bilinear(&imgs[i], size, size)).collect()
        };
        let stats_derm = ChannelStats::from_images(resized(&derm)?.iter())?;
        let stats_clin = ChannelStats::from_images(resized(&clin)?.iter())?;
        Ok(ImageSource {
            ids,
            derm,
            clin,
            labels,
            splits,
            stats_derm,
            stats_clin,
            size,
            seed,
            augment,
        })
    }

    fn prepare(
        &self,
        raw: &Image,
        stats: &ChannelStats,
        modality: &str,
        i: usize,
        epoch: Option<usize>,
    ) -> Result<Tensor> {
        let augmented = match (epoch, self.augment) {
            (Some(ep), true) => {
                let mut rng =
                    stream(self.seed, &["augment", modality, &self.ids[i], &ep.to_string()]);
                Some(augment(raw, &mut rng)?)
            }
            _ => None,
        };
        let mut img = resize_bilinear(augmented.as_ref().unwrap_or(raw), self.size, self.size)?;
        stats.normalize(&mut img);
        Ok(img.into_tensor())
    }
}

impl BatchSource for ImageSource {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn labels(&self, i: usize) -> &Labels {
        &self.labels[i]
    }

    fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    fn fetch(&self, i: usize, epoch: Option<usize>) -> Result<(Tensor, Tensor)> {
        let d = self.prepare(&self.derm[i], &self.stats_derm, "derm", i, epoch)?;
        let c = self.prepare(&self.clin[i], &self.stats_clin, "clin", i, epoch)?;
        Ok((d, c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub loss: LossWeights,
    /// Root for the shuffle streams; conventionally the run seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 4,
            adam: AdamHyper::default(),
            loss: LossWeights::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<EpochRow>,
}

impl TrainHistory {
    /// No timestamps on purpose: a rerun of the same configuration must
    /// produce this file byte for byte.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy,val_auc\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                opt(r.val_loss),
                opt(r.val_accuracy),
                opt(r.val_auc)
            ));
        }
        out
    }
}

/// One optimization step over a batch: mean joint loss, backward, Adam.
/// Returns the batch loss.
fn step_batch(
    model: &GiinModel,
    ps: &mut ParamStore,
    source: &impl BatchSource,
    batch: &[usize],
    epoch: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (loss_value, grads) = {
        let mut g = Graph::with_params(ps);
        let mut terms = Vec::with_capacity(batch.len());
        let w = 1.0 / batch.len() as f64;
        for &i in batch {
            let (d, c) = source.fetch(i, Some(epoch))?;
            let derm = g.input(d);
            let clin = g.input(c);
            let fwd = model.forward(&mut g, derm, clin)?;
            let loss = total_loss(&mut g, &fwd, source.labels(i), &cfg.loss)?;
            terms.push((w, loss));
        }
        let batch_loss = g.lin_comb(&terms)?;
        g.backward(batch_loss)?;
        (g.value(batch_loss).item(), g.take_param_grads())
    };
    for (id, grad) in grads {
        ps.accumulate_grad(id, &grad)?;
    }
    ps.adam_step_all(&cfg.adam)?;
    Ok(loss_value)
}

pub fn train(
    model: &GiinModel,
    ps: &mut ParamStore,
    source: &impl BatchSource,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    let train_idx = source.split_indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Domain("no training examples in dataset".into()));
    }
    let has_val = !source.split_indices(Split::Val).is_empty();

    ps.init_optimizer();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut stream(cfg.seed, &["shuffle", &epoch.to_string()]));

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            loss_sum += step_batch(model, ps, source, batch, epoch, cfg)? * batch.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;

        let val = if has_val {
            Some(evaluate(model, ps, source, Split::Val, &cfg.loss)?)
        } else {
            None
        };
        history.rows.push(EpochRow {
            epoch,
            train_loss,
            val_loss: val.as_ref().map(|r| r.loss),
            val_accuracy: val.as_ref().map(|r| r.mean_accuracy()),
            val_auc: val.as_ref().and_then(|r| r.mean_auc()),
        });
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryEval {
    pub category: Category,
    pub accuracy: f64,
    /// One-vs-rest macro AUC; `None` when the split has a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split: Split,
    pub n: usize,
    pub loss: f64,
    pub categories: Vec<CategoryEval>,
}

impl EvalReport {
    pub fn mean_accuracy(&self) -> f64 {
        let s: f64 = self.categories.iter().map(|c| c.accuracy).sum();
        s / self.categories.len() as f64
    }

    pub fn mean_auc(&self) -> Option<f64> {
        let defined: Vec<f64> = self.categories.iter().filter_map(|c| c.auc).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,accuracy,auc\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.categories {
            out.push_str(&format!("{},{},{}\n", c.category.name(), c.accuracy, opt(c.auc)));
        }
        out.push_str(&format!("mean,{},{}\n", self.mean_accuracy(), opt(self.mean_auc())));
        out
    }
}

pub fn evaluate(
    model: &GiinModel,
    ps: &ParamStore,
    source: &impl BatchSource,
    split: Split,
    weights: &LossWeights,
) -> Result<EvalReport> {
    let idx = source.split_indices(split);
    if idx.is_empty() {
        return Err(Error::Domain(format!("no examples in the {} split", split.name())));
    }
    let mut loss_sum = 0.0;
    let mut probs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); Category::ALL.len()];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); Category::ALL.len()];
    let mut truth: Vec<Vec<usize>> = vec![Vec::new(); Category::ALL.len()];
    for &i in &idx {
        let mut g = Graph::with_params(ps);
        let (d, c) = source.fetch(i, None)?;
        let derm = g.input(d);
        let clin = g.input(c);
        let fwd = model.forward(&mut g, derm, clin)?;
        let loss = total_loss(&mut g, &fwd, source.labels(i), weights)?;
        loss_sum += g.value(loss).item();
        for (j, cat) in Category::ALL.iter().enumerate() {
            let p = stable_softmax(g.value(fwd.fcp_logits[j]).data());
            preds[j].push(argmax(&p));
            probs[j].push(p);
            truth[j].push(source.labels(i).class(*cat));
        }
    }
    let mut categories = Vec::with_capacity(Category::ALL.len());
    for (j, cat) in Category::ALL.iter().enumerate() {
        categories.push(CategoryEval {
            category: *cat,
            accuracy: accuracy(&preds[j], &truth[j])?,
            auc: macro_auc(&probs[j], &truth[j], cat.num_classes())?,
        });
    }
    Ok(EvalReport { split, n: idx.len(), loss: loss_sum / idx.len() as f64, categories })
}
