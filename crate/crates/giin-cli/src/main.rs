//! Command line for the graph-attention skin lesion classifier.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, data, failed check),
//! 2 configuration or usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use giin::config::RunConfig;
use giin::data::manifest::Split;
use giin::data::schema::{checklist_score, is_suspected, Category, Labels, ScoreWeights};
use giin::data::synth::SynthConfig;
use giin::error::Error;
use giin::harness;

#[derive(Parser)]
#[command(name = "giin", version, about = "Multimodal skin lesion classification over category graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on a manifest and write history, metrics, and a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Train every standard configuration and write a comparison table.
    Ablate(AblateArgs),
    /// Compare backpropagated gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic feature dataset with a manifest.
    Synth(SynthArgs),
    /// Write the attention coefficients a checkpoint assigns to one example.
    DumpAttention(DumpAttentionArgs),
    /// Compute checklist scores from recorded labels.
    Score(ScoreArgs),
}

/// Configuration source shared by the commands that run the model: an
/// optional file of `key=value` lines plus individual overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; unset keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set scale=0.25. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved configuration, including derived constants, and exit.
    #[arg(long)]
    print_config: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Handle --print-config; returns true when the run should stop here.
    fn printed(&self, cfg: &RunConfig) -> Result<bool, Error> {
        if self.print_config {
            print!("{}", cfg.audit_text()?);
        }
        Ok(self.print_config)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest (feature or image kind).
    #[arg(long)]
    data: PathBuf,
    /// Directory for history.csv, metrics_*.csv, and model.ck.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split to evaluate: train, val, or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; configurations are independent, so the count never
    /// changes results. Falls back to GIIN_THREADS, then the CPU count.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Coordinates sampled per parameter tensor.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    /// Write the per-group report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corrupt this parameter's analytic gradient to prove the check can
    /// fail. Testing hook.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for manifest.csv and the feature files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    /// Feature noise level; zero makes features a pure function of labels.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Probability that a melanoma case shows each indicative criterion.
    #[arg(long, default_value_t = 0.5)]
    label_correlation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DumpAttentionArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Manifest id of the example to inspect.
    #[arg(long)]
    id: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ScoreInput {
    /// Manifest whose recorded labels get scored.
    #[arg(long)]
    data: Option<PathBuf>,
    /// One case as comma-separated class indices in category order
    /// DIAG,PN,STR,PIG,RS,DaG,BWV,VS.
    #[arg(long)]
    labels: Option<String>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: ScoreInput,
}

fn parse_split(s: &str) -> Result<Split, Error> {
    Split::from_name(s)
        .ok_or_else(|| Error::Config(format!("unknown split '{s}', expected train, val, or test")))
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => harness::write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.cmd {
        Cmd::Train(args) => {
            let cfg = args.config.resolve()?;
            if args.config.printed(&cfg)? {
                return Ok(ExitCode::SUCCESS);
            }
            let outputs = harness::run_train(&args.data, &cfg, &args.out)?;
            println!("checkpoint: {}", outputs.checkpoint_path.display());
            println!("history: {}", outputs.history_path.display());
            if let Some(last) = outputs.history.rows.last() {
                println!("final train loss: {}", last.train_loss);
            }
            for report in &outputs.reports {
                let auc = report.mean_auc().map(|a| a.to_string()).unwrap_or_else(|| "n/a".into());
                println!(
                    "{}: n={} loss={} accuracy={} auc={}",
                    report.split.name(),
                    report.n,
                    report.loss,
                    report.mean_accuracy(),
                    auc
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval(args) => {
            let split = parse_split(&args.split)?;
            let report = harness::run_eval(&args.data, &args.checkpoint, split)?;
            emit(args.out.as_ref(), &report.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Ablate(args) => {
            let cfg = args.config.resolve()?;
            if args.config.printed(&cfg)? {
                return Ok(ExitCode::SUCCESS);
            }
            let threads = args.threads.unwrap_or_else(default_threads);
            let outputs = harness::run_ablate(&args.data, &cfg, &args.out, threads)?;
            println!("table: {}", outputs.csv_path.display());
            for row in &outputs.rows {
                let auc = row
                    .val
                    .as_ref()
                    .and_then(|r| r.mean_auc())
                    .map(|a| a.to_string())
                    .unwrap_or_else(|| "n/a".into());
                println!("{}: train_loss={} val_auc={}", row.name, row.train_loss, auc);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gradcheck(args) => {
            let cfg = args.config.resolve()?;
            if args.config.printed(&cfg)? {
                return Ok(ExitCode::SUCCESS);
            }
            let report = harness::run_gradcheck(&cfg, args.samples, args.inject_fault.as_deref())?;
            emit(args.out.as_ref(), &report.to_csv())?;
            let max = report.max_rel_err();
            eprintln!("max relative error: {max} (threshold {})", args.threshold);
            if max < args.threshold {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Cmd::Synth(args) => {
            let manifest = harness::run_synth(
                &SynthConfig {
                    n: args.n,
                    feature_dim: args.feature_dim,
                    noise: args.noise,
                    label_correlation: args.label_correlation,
                    seed: args.seed,
                },
                &args.out,
            )?;
            println!("manifest: {}", manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::DumpAttention(args) => {
            let csv = harness::run_dump_attention(&args.checkpoint, &args.data, &args.id)?;
            emit(args.out.as_ref(), &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Score(args) => {
            if let Some(manifest) = &args.input.data {
                print!("{}", harness::run_score(manifest)?);
            } else if let Some(text) = &args.input.labels {
                let labels = parse_labels(text)?;
                let weights = ScoreWeights::default();
                println!("score: {}", checklist_score(&labels, &weights));
                println!("suspected: {}", is_suspected(&labels, &weights));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_labels(text: &str) -> Result<Labels, Error> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != Category::ALL.len() {
        return Err(Error::Config(format!(
            "expected {} comma-separated class indices, got {}",
            Category::ALL.len(),
            parts.len()
        )));
    }
    let mut classes = [0usize; 8];
    for (i, p) in parts.iter().enumerate() {
        classes[i] = p
            .parse()
            .map_err(|_| Error::Config(format!("class index '{p}' is not a number")))?;
    }
    Labels::new(classes)
}

fn default_threads() -> usize {
    std::env::var("GIIN_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(7)
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
