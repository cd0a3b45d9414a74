//! Command-line front end.
//!
//! Every command writes `run_manifest.json` into its output directory. The
//! manifest records the command and all flags except `--out` and `--jobs`;
//! `replay` re-runs it and, for the same inputs, produces the same bytes.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error. Diagnostics go to stderr; stdout carries report tables.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{self, create_dir, load_dataset, write_json, write_rgb, Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::mask::PartSegmentation;
use crate::metrics::IouReport;
use crate::pipeline::{self, PriorConfig, PriorEngine, Strategy};
use crate::prior::DEFAULT_STICK_WIDTH;
use crate::refiner::{RefinerModel, TrainingConfig, DEFAULT_EPOCHS, DEFAULT_INIT_GAIN, DEFAULT_LEARNING_RATE};
use crate::search::{DEFAULT_CLUSTER_SIZE, DEFAULT_POOL_SIZE};
use crate::synth::{generate_synthetic, SynthConfig};
use crate::topology::SkeletonTopology;

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const MODEL_FILE: &str = "model.prfn";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "partprior", version, about = "Part-level segmentation priors from keypoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic articulated-figure dataset.
    Synth(SynthArgs),
    /// Build a prior for every pose-only example.
    Prior(PriorArgs),
    /// Skeleton-stick baseline priors (prior --strategy skeleton-map).
    Baseline(BaselineArgs),
    /// Train the per-pixel refiner on the labeled examples.
    RefineTrain(TrainArgs),
    /// Label every pose-only example and write the result as a labeled dataset.
    Transfer(TransferArgs),
    /// Score predicted label maps against ground truth.
    Eval(EvalArgs),
    /// Compare the skeleton baseline with part priors over several cluster sizes.
    Sweep(SweepArgs),
    /// Re-run a command from its run manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct Output {
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores. Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 250)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub width: u32,
    #[arg(long, default_value_t = 64)]
    pub height: u32,
    #[arg(long, default_value_t = 0.2)]
    pub pose_only_fraction: f64,
    #[arg(long, default_value_t = 20.0)]
    pub noise: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PriorFlags {
    /// part-prior, skeleton-map or nearest-only.
    #[arg(long, default_value = "part-prior")]
    pub strategy: Strategy,
    /// Neighbors averaged per prior (k).
    #[arg(long, default_value_t = DEFAULT_CLUSTER_SIZE)]
    pub cluster_size: usize,
    /// Nearest neighbors sampled from when --sample is set (n).
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_STICK_WIDTH)]
    pub stick_width: f64,
    /// Pick k of the n nearest at random instead of the k nearest.
    #[arg(long)]
    pub sample: bool,
    /// Allow a target to appear in its own cluster.
    #[arg(long)]
    pub include_self: bool,
}

impl PriorFlags {
    fn config(&self) -> Result<PriorConfig> {
        if self.cluster_size > self.pool_size {
            return Err(Error::InvalidConfig(format!(
                "--cluster-size {} exceeds --pool-size {}",
                self.cluster_size, self.pool_size
            )));
        }
        let c = PriorConfig {
            strategy: self.strategy,
            cluster_size: self.cluster_size,
            pool_size: self.pool_size,
            seed: self.seed,
            stick_width: self.stick_width,
            exclude_self: !self.include_self,
            sample: self.sample,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PriorArgs {
    /// Dataset root.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STICK_WIDTH)]
    pub stick_width: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: u32,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    /// Gain of the prior-identity starting model.
    #[arg(long, default_value_t = DEFAULT_INIT_GAIN)]
    pub init_gain: f64,
    /// Neighbors averaged per training prior (k).
    #[arg(long, default_value_t = DEFAULT_CLUSTER_SIZE)]
    pub cluster_size: usize,
    /// Nearest neighbors each training cluster is drawn from (n).
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pub pool_size: usize,
    /// Seeds both cluster sampling and the update order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub working_width: u32,
    #[arg(long, default_value_t = 64)]
    pub working_height: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TransferArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model file or directory written by refine-train, or `none` for the prior argmax.
    #[arg(long, default_value = "none")]
    pub refiner: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Dataset root or directory of `<id>.png` label maps.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset root or directory of `<id>.png` label maps.
    #[arg(long)]
    pub gt: PathBuf,
    /// Topology for plain label directories; the built-in human topology by default.
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// Score every part instead of the left/right-merged classes.
    #[arg(long)]
    pub unmerged: bool,
    /// Row label in the report table.
    #[arg(long, default_value = "prediction")]
    pub label: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    pub cluster_sizes: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_STICK_WIDTH)]
    pub stick_width: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    /// A run_manifest.json written by an earlier run.
    pub manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub run: Command,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl Command {
    fn output_mut(&mut self) -> Option<&mut Output> {
        Some(match self {
            Command::Synth(a) => &mut a.output,
            Command::Prior(a) => &mut a.output,
            Command::Baseline(a) => &mut a.output,
            Command::RefineTrain(a) => &mut a.output,
            Command::Transfer(a) => &mut a.output,
            Command::Eval(a) => &mut a.output,
            Command::Sweep(a) => &mut a.output,
            Command::Replay(_) => return None,
        })
    }

    fn jobs(&self) -> usize {
        match self {
            Command::Replay(a) => a.jobs,
            c => c.clone().output_mut().map_or(0, |o| o.jobs),
        }
    }
}

/// Parses `args` (program name first), runs the command, and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(|| execute(cli.command));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
        Err(_) => EXIT_INTERNAL,
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root_cause() {
        Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Runs a parsed command inside a pool of `--jobs` threads.
pub fn execute(command: Command) -> Result<()> {
    let jobs = command.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| dispatch(command))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Replay(a) => replay(&a),
        c => {
            let details = match &c {
                Command::Synth(a) => cmd_synth(a)?,
                Command::Prior(a) => cmd_prior(&a.data, &a.prior.config()?, &a.output.out)?,
                Command::Baseline(a) => {
                    let cfg = PriorConfig {
                        stick_width: a.stick_width,
                        ..PriorConfig::with_strategy(Strategy::SkeletonMap)
                    };
                    cfg.validate()?;
                    cmd_prior(&a.data, &cfg, &a.output.out)?
                }
                Command::RefineTrain(a) => cmd_refine_train(a)?,
                Command::Transfer(a) => cmd_transfer(a)?,
                Command::Eval(a) => cmd_eval(a)?,
                Command::Sweep(a) => cmd_sweep(a)?,
                Command::Replay(_) => unreachable!(),
            };
            let out = c.clone().output_mut().expect("not a replay").out.clone();
            write_json(
                &out.join(RUN_MANIFEST),
                &RunManifest {
                    tool: env!("CARGO_PKG_NAME").to_string(),
                    version: env!("CARGO_PKG_VERSION").to_string(),
                    run: c,
                    details,
                },
            )
        }
    }
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let manifest: RunManifest = dataset::read_json(&a.manifest)?;
    let mut run = manifest.run;
    let out = a.out.clone().unwrap_or_else(|| {
        a.manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    if let Some(o) = run.output_mut() {
        o.out = out;
        o.jobs = a.jobs;
    }
    dispatch(run)
}

fn cmd_synth(a: &SynthArgs) -> Result<serde_json::Value> {
    let cfg = SynthConfig {
        count: a.count,
        width: a.width,
        height: a.height,
        pose_only_fraction: a.pose_only_fraction,
        noise: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic(&cfg)?;
    create_dir(&a.output.out)?;
    dataset::save_dataset(&ds, &a.output.out)?;
    eprintln!(
        "wrote {} labeled and {} pose-only figures to {}",
        ds.labeled.len(),
        ds.pose_only.len(),
        a.output.out.display()
    );
    Ok(json!({ "synth_config": cfg }))
}

fn cmd_prior(data: &Path, cfg: &PriorConfig, out: &Path) -> Result<serde_json::Value> {
    let ds = load_dataset(data)?;
    let engine = PriorEngine::new(&ds)?;
    let priors = engine.pose_only_priors(&ds, cfg)?;
    create_dir(&out.join("priors"))?;
    create_dir(&out.join("composites"))?;
    priors.par_iter().try_for_each(|p| -> Result<()> {
        p.prior.save(&out.join("priors").join(format!("{}.ppri", p.id)))?;
        write_rgb(&out.join("composites").join(format!("{}.png", p.id)), &p.prior.composite())
    })?;
    eprintln!("wrote {} priors to {}", priors.len(), out.display());
    let clusters: serde_json::Map<String, serde_json::Value> =
        priors.iter().map(|p| (p.id.clone(), json!(p.cluster))).collect();
    Ok(json!({
        "prior_config": cfg,
        "cluster_size_used": cfg.effective_cluster_size(),
        "clusters": clusters,
        "skipped": skipped_json(&engine),
    }))
}

fn skipped_json(engine: &PriorEngine) -> serde_json::Value {
    engine
        .skipped()
        .iter()
        .map(|s| json!({ "id": s.id, "reason": s.reason }))
        .collect()
}

fn cmd_refine_train(a: &TrainArgs) -> Result<serde_json::Value> {
    let prior = PriorFlags {
        strategy: Strategy::PartPrior,
        cluster_size: a.cluster_size,
        pool_size: a.pool_size,
        seed: a.seed,
        stick_width: DEFAULT_STICK_WIDTH,
        sample: true,
        include_self: false,
    }
    .config()?;
    if a.working_width == 0 || a.working_height == 0 {
        return Err(Error::InvalidConfig("working size must be positive".into()));
    }
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(Error::InvalidConfig(format!("learning rate {} must be positive", a.lr)));
    }
    let training = TrainingConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        init_gain: a.init_gain,
        seed: a.seed,
    };
    let ds = load_dataset(&a.data)?;
    let model = pipeline::train_on_dataset(&ds, &prior, &training, (a.working_width, a.working_height))?;
    create_dir(&a.output.out)?;
    model.save(&a.output.out.join(MODEL_FILE))?;
    let m = model.meta();
    eprintln!(
        "trained on {} examples: loss {:.6} -> {:.6}",
        ds.labeled.len(),
        m.initial_loss,
        m.final_loss
    );
    Ok(json!({
        "prior_config": prior,
        "training_examples": ds.labeled.len(),
        "initial_loss": m.initial_loss,
        "final_loss": m.final_loss,
        "model": MODEL_FILE,
    }))
}

fn load_refiner(arg: &str) -> Result<Option<RefinerModel>> {
    if arg == "none" {
        return Ok(None);
    }
    let mut path = PathBuf::from(arg);
    if path.is_dir() {
        path = path.join(MODEL_FILE);
    }
    RefinerModel::load(&path).map(Some)
}

fn cmd_transfer(a: &TransferArgs) -> Result<serde_json::Value> {
    let cfg = a.prior.config()?;
    let model = load_refiner(&a.refiner)?;
    let ds = load_dataset(&a.data)?;
    let engine = PriorEngine::new(&ds)?;
    let priors = engine.pose_only_priors(&ds, &cfg)?;
    let labeled = ds
        .pose_only
        .par_iter()
        .zip(&priors)
        .map(|(e, p)| {
            let labels = pipeline::label_target(model.as_ref(), &e.image, &p.prior).map_err(|x| x.for_example(&e.id))?;
            Ok(LabeledExample {
                id: e.id.clone(),
                image: e.image.clone(),
                pose: e.pose.clone(),
                segmentation: labels.to_segmentation(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out_ds = Dataset {
        topology: ds.topology.clone(),
        labeled,
        pose_only: Vec::new(),
    };
    create_dir(&a.output.out)?;
    dataset::save_dataset(&out_ds, &a.output.out)?;
    eprintln!("wrote {} transferred examples to {}", out_ds.labeled.len(), a.output.out.display());
    let clusters: serde_json::Map<String, serde_json::Value> =
        priors.iter().map(|p| (p.id.clone(), json!(p.cluster))).collect();
    Ok(json!({
        "prior_config": cfg,
        "refined": model.is_some(),
        "clusters": clusters,
    }))
}

/// Scores `pred` against `gt` over their shared ids.
pub fn evaluate_dirs(pred: &Path, gt: &Path, topology: &SkeletonTopology, unmerged: bool, label: &str) -> Result<(IouReport, String)> {
    let (topo, truth) = dataset::load_label_source(gt, topology)?;
    let (_, predicted) = dataset::load_label_source(pred, &topo)?;
    let predicted: std::collections::HashMap<String, PartSegmentation> = predicted.into_iter().collect();
    let mut items = Vec::new();
    for (id, t) in &truth {
        let Some(p) = predicted.get(id) else { continue };
        if p.dims() != t.dims() {
            return Err(Error::ShapeMismatch(format!("prediction is {:?}, ground truth is {:?}", p.dims(), t.dims())).for_example(id));
        }
        let (p, t) = if unmerged {
            (p.to_part_labels(), t.to_part_labels())
        } else {
            (p.to_merged_labels(&topo)?, t.to_merged_labels(&topo)?)
        };
        items.push((id.clone(), p, t));
    }
    if items.is_empty() {
        return Err(Error::NoOverlap);
    }
    let names = if unmerged {
        pipeline::part_class_names(&topo)
    } else {
        pipeline::merged_class_names(&topo)
    };
    let report = pipeline::score(names, &items)?;
    let text = report.to_text(label);
    Ok((report, text))
}

fn cmd_eval(a: &EvalArgs) -> Result<serde_json::Value> {
    let topology = match &a.topology {
        Some(p) => SkeletonTopology::load(p)?,
        None => SkeletonTopology::human(),
    };
    let (report, text) = evaluate_dirs(&a.pred, &a.gt, &topology, a.unmerged, &a.label)?;
    create_dir(&a.output.out)?;
    let txt = a.output.out.join("report.txt");
    fs::write(&txt, &text).map_err(|e| Error::io(format!("writing {}", txt.display()), e))?;
    write_json(&a.output.out.join("report.json"), &report)?;
    print!("{text}");
    Ok(json!({ "images": report.images, "mean_iou": report.mean }))
}

fn cmd_sweep(a: &SweepArgs) -> Result<serde_json::Value> {
    if a.cluster_sizes.is_empty() || a.cluster_sizes.contains(&0) {
        return Err(Error::InvalidConfig("cluster sizes must be positive".into()));
    }
    let ds = load_dataset(&a.data)?;
    let rows = pipeline::strategy_sweep(&ds, &a.cluster_sizes, a.stick_width)?;
    let text = pipeline::sweep_table(&rows);
    create_dir(&a.output.out)?;
    let txt = a.output.out.join("sweep.txt");
    fs::write(&txt, &text).map_err(|e| Error::io(format!("writing {}", txt.display()), e))?;
    write_json(&a.output.out.join("sweep.json"), &rows)?;
    print!("{text}");
    Ok(json!({ "rows": rows.len() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("partprior").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn defaults() {
        let Command::Prior(p) = parse(&["prior", "--data", "d", "--out", "o"]) else { panic!() };
        assert_eq!(p.prior.cluster_size, 3);
        assert_eq!(p.prior.pool_size, 5);
        assert_eq!(p.prior.stick_width, 7.0);
        assert_eq!(p.prior.strategy, Strategy::PartPrior);
        assert!(p.prior.config().unwrap().exclude_self);
        let Command::Sweep(s) = parse(&["sweep", "--data", "d", "--out", "o"]) else { panic!() };
        assert_eq!(s.cluster_sizes, vec![1, 3, 5, 7]);
    }

    #[test]
    fn manifest_omits_out_and_jobs() {
        let c = parse(&["synth", "--out", "somewhere", "--jobs", "3", "--count", "5"]);
        let text = serde_json::to_string(&c).unwrap();
        assert!(!text.contains("somewhere") && !text.contains("jobs"));
        let back: Command = serde_json::from_str(&text).unwrap();
        let Command::Synth(s) = back else { panic!() };
        assert_eq!(s.count, 5);
        assert_eq!(s.output, Output::default());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["partprior", "synth"]), EXIT_USAGE);
        assert_eq!(run(["partprior", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["partprior", "prior", "--data", "d", "--out", "o", "--strategy", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["partprior", "--help"]), EXIT_OK);
    }

    #[test]
    fn k_above_n_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let code = run([
            "partprior", "prior", "--data", "missing", "--out", out.to_str().unwrap(), "--cluster-size", "6",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let data = dir.path().join("nothing");
        let code = run(["partprior", "prior", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_DATA);
    }
}
