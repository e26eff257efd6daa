//! Run drivers shared by the command line and the test suite: training with
//! artifact output, checkpoint evaluation, the ablation sweep, derivative
//! checking, and attention inspection.
//!
//! Every artifact is written atomically (temp file, then rename) and
//! contains no timestamps, so identical configurations produce identical
//! bytes.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;

use crate::autodiff::{Graph, ParamStore, Tensor, WorstCoord};
use crate::checkpoint::{read_checkpoint, restore_into, save_checkpoint};
use crate::config::RunConfig;
use crate::data::manifest::{
    load_feature_dataset, read_manifest, FeatureDataset, InputKind, Manifest, Split,
};
use crate::data::schema::{checklist_score, is_suspected, Category, Labels, ScoreWeights};
use crate::data::synth::{generate, write_dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::model::{GiinModel, GraphVariant, Mode};
use crate::rng::stream;
use crate::train::{
    evaluate, train, BatchSource, EvalReport, FeatureSource, ImageSource, TrainHistory,
};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A manifest pulled into memory, whichever payload kind it referenced.
pub enum LoadedData {
    Features(FeatureDataset),
    Images(ImageSource),
}

impl BatchSource for LoadedData {
    fn len(&self) -> usize {
        match self {
            LoadedData::Features(d) => d.examples.len(),
            LoadedData::Images(s) => s.len(),
        }
    }

    fn labels(&self, i: usize) -> &Labels {
        match self {
            LoadedData::Features(d) => &d.examples[i].labels,
            LoadedData::Images(s) => s.labels(i),
        }
    }

    fn split(&self, i: usize) -> Split {
        match self {
            LoadedData::Features(d) => d.examples[i].split,
            LoadedData::Images(s) => s.split(i),
        }
    }

    fn fetch(&self, i: usize, epoch: Option<usize>) -> Result<(Tensor, Tensor)> {
        match self {
            LoadedData::Features(d) => FeatureSource::new(d).fetch(i, epoch),
            LoadedData::Images(s) => s.fetch(i, epoch),
        }
    }
}

impl LoadedData {
    /// Feature widths the model will see per modality; zero for images,
    /// where the extractor decides.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            LoadedData::Features(d) => (d.derm_dim, d.clin_dim),
            LoadedData::Images(_) => (0, 0),
        }
    }
}

/// Read a manifest and load its payloads. The payload kind must agree with
/// the extractor switch: images need it, feature vectors exclude it.
pub fn load_data(manifest_path: &Path, cfg: &RunConfig) -> Result<(Manifest, LoadedData)> {
    let manifest = read_manifest(manifest_path)?;
    let data = match (manifest.kind, cfg.extractor) {
        (InputKind::Features, false) => {
            LoadedData::Features(load_feature_dataset(&manifest)?)
        }
        (InputKind::Images, true) => LoadedData::Images(ImageSource::load(
            &manifest,
            cfg.image_size,
            cfg.seed,
            cfg.augment,
        )?),
        (InputKind::Features, true) => {
            return Err(Error::Config(
                "extractor=true needs an image manifest, this one has feature vectors".into(),
            ))
        }
        (InputKind::Images, false) => {
            return Err(Error::Config(
                "image manifest needs extractor=true to learn features".into(),
            ))
        }
    };
    Ok((manifest, data))
}

/// Config with dataset-derived widths baked in, as stored in checkpoints.
fn resolve(cfg: &RunConfig, data: &LoadedData) -> RunConfig {
    let (d, c) = data.dims();
    let mut r = cfg.clone();
    if r.derm_dim == 0 {
        r.derm_dim = d;
    }
    if r.clin_dim == 0 {
        r.clin_dim = c;
    }
    r
}

pub struct TrainOutputs {
    pub history: TrainHistory,
    pub history_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Evaluation of every nonempty split, in (train, val, test) order.
    pub reports: Vec<EvalReport>,
}

pub fn run_train(manifest_path: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<TrainOutputs> {
    let (_, data) = load_data(manifest_path, cfg)?;
    let resolved = resolve(cfg, &data);
    let (dd, cd) = data.dims();

    let mut ps = ParamStore::new();
    let model = GiinModel::new(&mut ps, &resolved.model_config(dd, cd))?;
    let history = train(&model, &mut ps, &data, &resolved.train_config())?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let history_path = out_dir.join("history.csv");
    write_atomic(&history_path, history.to_csv().as_bytes())?;
    let checkpoint_path = out_dir.join("model.ck");
    save_checkpoint(&checkpoint_path, &ps, &resolved.to_text())?;

    let mut reports = Vec::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        if data.split_indices(split).is_empty() {
            continue;
        }
        let report = evaluate(&model, &ps, &data, split, &resolved.train_config().loss)?;
        let path = out_dir.join(format!("metrics_{}.csv", split.name()));
        write_atomic(&path, report.to_csv().as_bytes())?;
        reports.push(report);
    }
    Ok(TrainOutputs { history, history_path, checkpoint_path, reports })
}

/// Rebuild the model a checkpoint describes and restore its parameters.
pub fn load_model(checkpoint_path: &Path) -> Result<(RunConfig, ParamStore, GiinModel)> {
    let ck = read_checkpoint(checkpoint_path)?;
    let cfg = RunConfig::from_text(&ck.config_text)?;
    let mut ps = ParamStore::new();
    let model = GiinModel::new(&mut ps, &cfg.model_config(cfg.derm_dim, cfg.clin_dim))?;
    restore_into(&mut ps, &ck)?;
    Ok((cfg, ps, model))
}

pub fn run_eval(manifest_path: &Path, checkpoint_path: &Path, split: Split) -> Result<EvalReport> {
    let (cfg, ps, model) = load_model(checkpoint_path)?;
    let (_, data) = load_data(manifest_path, &cfg)?;
    evaluate(&model, &ps, &data, split, &cfg.train_config().loss)
}

/// The standard comparison sweep: prediction heads alone, embedding units
/// without the graph, then the graph under each two-modality topology.
pub fn ablation_grid(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let with = |mode: Mode, variant: GraphVariant| {
        let mut c = base.clone();
        c.mode = mode;
        c.variant = variant;
        let name = match mode {
            Mode::Full => format!("full-{}", variant.name()),
            _ => mode.name().to_string(),
        };
        (name, c)
    };
    vec![
        with(Mode::Baseline, GraphVariant::DermToClin),
        with(Mode::Celm, GraphVariant::DermToClin),
        with(Mode::Full, GraphVariant::Separate),
        with(Mode::Full, GraphVariant::DermToClin),
        with(Mode::Full, GraphVariant::ClinToDerm),
        with(Mode::Full, GraphVariant::Inv),
        with(Mode::Full, GraphVariant::Fused),
    ]
}

#[derive(Debug, Clone)]
pub struct AblateRow {
    pub name: String,
    pub config: RunConfig,
    pub train_loss: f64,
    pub val: Option<EvalReport>,
    pub test: Option<EvalReport>,
}

pub struct AblateOutputs {
    pub rows: Vec<AblateRow>,
    pub csv_path: PathBuf,
}

fn ablate_csv(rows: &[AblateRow]) -> String {
    let mut out =
        String::from("config,mode,variant,train_loss,val_accuracy,val_auc,test_accuracy,test_auc\n");
    let acc = |r: &Option<EvalReport>| r.as_ref().map(|r| r.mean_accuracy().to_string()).unwrap_or_default();
    let auc = |r: &Option<EvalReport>| {
        r.as_ref().and_then(|r| r.mean_auc()).map(|a| a.to_string()).unwrap_or_default()
    };
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.name,
            row.config.mode.name(),
            row.config.variant.name(),
            row.train_loss,
            acc(&row.val),
            auc(&row.val),
            acc(&row.test),
            auc(&row.test),
        ));
    }
    out
}

/// Train and evaluate every grid entry on one dataset. Entries run in
/// parallel up to `threads`, but each is fully seeded, so the output does
/// not depend on the thread count.
pub fn run_ablate(
    manifest_path: &Path,
    base: &RunConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<AblateOutputs> {
    if threads == 0 {
        return Err(Error::Config("threads must be positive".into()));
    }
    let (_, data) = load_data(manifest_path, base)?;
    let grid = ablation_grid(base);

    let slots: Vec<Mutex<Option<Result<AblateRow>>>> =
        grid.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let run_one = |name: &str, cfg: &RunConfig| -> Result<AblateRow> {
        let resolved = resolve(cfg, &data);
        let (dd, cd) = data.dims();
        let mut ps = ParamStore::new();
        let model = GiinModel::new(&mut ps, &resolved.model_config(dd, cd))?;
        let history = train(&model, &mut ps, &data, &resolved.train_config())?;
        let eval_split = |split: Split| -> Result<Option<EvalReport>> {
            if data.split_indices(split).is_empty() {
                return Ok(None);
            }
            evaluate(&model, &ps, &data, split, &resolved.train_config().loss).map(Some)
        };
        let val = eval_split(Split::Val)?;
        let test = eval_split(Split::Test)?;
        Ok(AblateRow {
            name: name.to_string(),
            train_loss: history.rows.last().expect("epochs > 0").train_loss,
            config: resolved,
            val,
            test,
        })
    };
    std::thread::scope(|scope| {
        for _ in 0..threads.min(grid.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((name, cfg)) = grid.get(i) else { break };
                let row = run_one(name, cfg);
                *slots[i].lock().unwrap() = Some(row);
            });
        }
    });

    let mut rows = Vec::with_capacity(grid.len());
    for slot in slots {
        rows.push(slot.into_inner().unwrap().expect("every slot claimed")?);
    }

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("ablate.csv");
    write_atomic(&csv_path, ablate_csv(&rows).as_bytes())?;
    Ok(AblateOutputs { rows, csv_path })
}

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradcheckGroup {
    pub group: String,
    pub tensors: usize,
    pub coords: usize,
    pub worst: WorstCoord,
    pub worst_param: String,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub groups: Vec<GradcheckGroup>,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.worst.rel_err).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,tensors,coords,max_rel_err,worst_param,worst_coord,analytic,numeric\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                g.group,
                g.tensors,
                g.coords,
                g.worst.rel_err,
                g.worst_param,
                g.worst.coord,
                g.worst.analytic,
                g.worst.numeric
            ));
        }
        out
    }
}

/// Logical unit a parameter belongs to: its name minus the final segment,
/// e.g. `celm.derm.DIAG.w0 -> celm.derm.DIAG`, `gat1.h3.a -> gat1.h3`.
fn param_group(name: &str) -> String {
    match name.rsplit_once('.') {
        Some((head, _)) => head.to_string(),
        None => name.to_string(),
    }
}

/// Compare backpropagated gradients against central finite differences on
/// a fixed random batch, sampling `samples` coordinates per tensor.
/// `fault` corrupts one parameter's analytic gradient, as a negative
/// control proving the check can fail.
pub fn run_gradcheck(
    cfg: &RunConfig,
    samples: usize,
    fault: Option<&str>,
) -> Result<GradcheckReport> {
    if samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    let resolved = {
        let mut r = cfg.clone();
        if r.derm_dim == 0 {
            r.derm_dim = 12;
        }
        if r.clin_dim == 0 {
            r.clin_dim = 12;
        }
        r
    };
    let mut ps = ParamStore::new();
    let model = GiinModel::new(&mut ps, &resolved.model_config(0, 0))?;
    let weights = resolved.train_config().loss;

    // Fixed probe batch of two examples: enough to exercise batch
    // averaging without doubling every finite-difference evaluation.
    let batch: Vec<(Tensor, Tensor, Labels)> = (0..2)
        .map(|i| {
            let tag = i.to_string();
            let make = |kind: &str, dim: usize| -> Tensor {
                let mut rng = stream(resolved.seed, &["gradcheck", kind, &tag]);
                if resolved.extractor {
                    // 11 pixels: two strided convolutions leave a 2x2 map,
                    // so pooling still averages over space.
                    let data = (0..3 * 11 * 11).map(|_| rng.random_range(-1.5..1.5)).collect();
                    Tensor::from_vec(&[3, 11, 11], data).expect("static shape")
                } else {
                    let data = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                    Tensor::from_vec(&[dim], data).expect("static shape")
                }
            };
            let mut rng = stream(resolved.seed, &["gradcheck", "labels", &tag]);
            let mut classes = [0usize; 8];
            for (j, cat) in Category::ALL.iter().enumerate() {
                classes[j] = rng.random_range(0..cat.num_classes());
            }
            let labels = Labels::new(classes).expect("classes in range");
            (make("derm", resolved.derm_dim), make("clin", resolved.clin_dim), labels)
        })
        .collect();

    let loss_of = |ps: &ParamStore, fault_id| -> Result<(f64, Vec<(crate::autodiff::ParamId, Tensor)>)> {
        let mut g = Graph::with_params(ps);
        if let Some(id) = fault_id {
            g.inject_grad_fault(id);
        }
        let mut terms = Vec::with_capacity(batch.len());
        for (derm, clin, labels) in &batch {
            let d = g.input(derm.clone());
            let c = g.input(clin.clone());
            let fwd = model.forward(&mut g, d, c)?;
            let loss = crate::train::total_loss(&mut g, &fwd, labels, &weights)?;
            terms.push((1.0 / batch.len() as f64, loss));
        }
        let total = g.lin_comb(&terms)?;
        g.backward(total)?;
        Ok((g.value(total).item(), g.take_param_grads()))
    };

    let fault_id = match fault {
        Some(name) => Some(ps.lookup(name).ok_or_else(|| {
            Error::Config(format!("fault target '{name}' is not a parameter"))
        })?),
        None => None,
    };
    let (_, grads) = loss_of(&ps, fault_id)?;
    let mut analytic = vec![Tensor::zeros(&[0]); ps.len()];
    for (id, t) in grads {
        analytic[id.index()] = t;
    }

    let ids: Vec<_> = ps.iter().map(|(id, _, _)| id).collect();
    let mut groups: Vec<GradcheckGroup> = Vec::new();
    for id in ids {
        let name = ps.name(id).to_string();
        let group = param_group(&name);
        let len = ps.value(id).len();
        let coords: Vec<usize> = if len <= samples {
            (0..len).collect()
        } else {
            let mut rng = stream(resolved.seed, &["gradcheck-coords", &name]);
            let mut picked =
                rand::seq::index::sample(&mut rng, len, samples).into_vec();
            picked.sort_unstable();
            picked
        };
        let slot = match groups.iter().position(|g| g.group == group) {
            Some(i) => i,
            None => {
                groups.push(GradcheckGroup {
                    group,
                    tensors: 0,
                    coords: 0,
                    worst: WorstCoord::default(),
                    worst_param: String::new(),
                });
                groups.len() - 1
            }
        };
        let entry = &mut groups[slot];
        entry.tensors += 1;
        for k in coords {
            let x0 = ps.value(id).data()[k];
            let numeric = crate::autodiff::central_difference(
                |x| {
                    ps.value_mut(id).data_mut()[k] = x;
                    loss_of(&ps, None).map(|(l, _)| l)
                },
                x0,
                GRADCHECK_EPS,
            )?;
            ps.value_mut(id).data_mut()[k] = x0;
            let a = analytic[id.index()].data()[k];
            let before = entry.worst.rel_err;
            entry.worst.update(k, a, numeric, GRADCHECK_FLOOR);
            if entry.worst.rel_err > before {
                entry.worst_param = name.clone();
            }
            entry.coords += 1;
        }
    }
    Ok(GradcheckReport { groups })
}

pub fn run_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    let examples = generate(cfg)?;
    write_dataset(out_dir, &examples)
}

/// Attention coefficients for one example as CSV, every layer, head, and
/// edge of the topology in deterministic order.
pub fn run_dump_attention(
    checkpoint_path: &Path,
    manifest_path: &Path,
    example_id: &str,
) -> Result<String> {
    let (cfg, ps, model) = load_model(checkpoint_path)?;
    if cfg.mode != Mode::Full {
        return Err(Error::Config(format!(
            "mode {} has no attention layers to dump",
            cfg.mode.name()
        )));
    }
    let (manifest, data) = load_data(manifest_path, &cfg)?;
    let index = manifest
        .entries
        .iter()
        .position(|e| e.id == example_id)
        .ok_or_else(|| Error::Domain(format!("example '{example_id}' not in manifest")))?;

    let mut g = Graph::with_params(&ps);
    let (d, c) = data.fetch(index, None)?;
    let derm = g.input(d);
    let clin = g.input(c);
    let fwd = model.forward(&mut g, derm, clin)?;
    let topo = model.topology.as_ref().expect("full mode has a topology");

    let mut out = String::from(
        "layer,head,receiver,receiver_label,sender,sender_label,coefficient\n",
    );
    for (l, layer) in fwd.attention.iter().enumerate() {
        for (m, heads) in layer.alpha.iter().enumerate() {
            for (u, &row) in heads.iter().enumerate() {
                let coeffs = g.value(row).data();
                let senders = topo.in_neighbors(u);
                debug_assert_eq!(coeffs.len(), senders.len());
                for (k, &v) in senders.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        l + 1,
                        m,
                        u,
                        topo.node_label(u),
                        v,
                        topo.node_label(v),
                        coeffs[k]
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Checklist scores for every manifest entry's recorded labels.
pub fn run_score(manifest_path: &Path) -> Result<String> {
    let manifest = read_manifest(manifest_path)?;
    let weights = ScoreWeights::default();
    let mut out = String::from("id,score,suspected\n");
    for e in &manifest.entries {
        out.push_str(&format!(
            "{},{},{}\n",
            e.id,
            checklist_score(&e.labels, &weights),
            is_suspected(&e.labels, &weights)
        ));
    }
    Ok(out)
}
