//! Declarative experiments: manifests, repeated runs, summaries and comparisons.
//!
//! Outputs land under `<output_dir>/<experiment_id>/`:
//!
//! ```text
//! manifest.json          the effective manifest (after overrides)
//! summary.json           RunSummary, deterministic for a fixed manifest
//! timing.json            wall-clock seconds per repeat (not deterministic)
//! <repeat>/metrics.csv
//! <repeat>/net.json
//! <repeat>/policy.json   synaptic runs with policy learning only
//! <repeat>/target.json   boundary tasks only
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::datasets::{self, BoundaryTaskSpec};
use crate::error::{Error, Result};
use crate::gd::{train_gd, GdConfig};
use crate::metrics::MetricsLog;
use crate::mlp::{chain, Activation, InitScheme, LossKind, Mlp};
use crate::policy::QTable;
use crate::rng::derive_seed;
use crate::trainer::{train, TrainerConfig};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

const TASK_STREAM: u64 = 10;
const SPLIT_STREAM: u64 = 11;
const INIT_STREAM: u64 = 12;
const TRAIN_STREAM: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub schema_version: u32,
    pub experiment_id: String,
    pub task: TaskSpec,
    pub net: NetShape,
    pub method: Method,
    #[serde(default)]
    pub policy: PolicySource,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Base seed; repeat `r` runs with seed `seed + r`. Seeds inside `method` are ignored.
    #[serde(default)]
    pub seed: u64,
    /// Training accuracy used for the iterations-to-convergence statistic.
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_repeats() -> usize {
    1
}
fn default_threshold() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Boundary {
        #[serde(default = "default_target_hidden")]
        hidden_units: usize,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default = "default_weight_range")]
        weight_range: (f64, f64),
        #[serde(default = "default_data_range")]
        data_range: (f64, f64),
    },
    Ocr {
        source_path: PathBuf,
        #[serde(default = "default_side")]
        image_side: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_split")]
        split_fraction: f64,
        /// IDX cache directory; read if present, written after a PNG load otherwise.
        #[serde(default)]
        idx_cache: Option<PathBuf>,
    },
}

fn default_target_hidden() -> usize {
    100
}
fn default_points() -> usize {
    2000
}
fn default_weight_range() -> (f64, f64) {
    (-1.0, 1.0)
}
fn default_data_range() -> (f64, f64) {
    (-10.0, 10.0)
}
fn default_side() -> usize {
    28
}
fn default_classes() -> usize {
    10
}
fn default_split() -> f64 {
    0.75
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetShape {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "default_init")]
    pub init: InitScheme,
}

/// Learner weights start small and symmetric, biases included.
fn default_init() -> InitScheme {
    InitScheme::Uniform { lo: -0.1, hi: 0.1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    SynapticRl(TrainerConfig),
    Gd(GdConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    #[default]
    Fresh,
    File(PathBuf),
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::FormatVersion {
                expected: MANIFEST_SCHEMA_VERSION,
                found: m.schema_version,
            });
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output directory
    /// is left out so the same experiment hashes equally wherever it is written.
    pub fn sha256(&self) -> Result<String> {
        let mut m = self.clone();
        m.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&m)?;
        Ok(hex::encode(Sha256::digest(&canonical)))
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir.join(&self.experiment_id)
    }

    pub fn apply(&mut self, opts: &RunOptions) {
        if let Some(seed) = opts.seed {
            self.seed = seed;
        }
        if let Some(out) = &opts.out {
            self.output_dir = out.clone();
        }
        if let Some(r) = opts.repeats {
            self.repeats = r;
        }
        if let (Some(t), Method::SynapticRl(cfg)) = (opts.threads, &mut self.method) {
            cfg.threads = t;
        }
    }

    /// Every problem found, so a user can fix them all at once.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.experiment_id.is_empty()
            || self.experiment_id.contains(['/', '\\'])
            || self.experiment_id.starts_with('.')
        {
            out.push(format!(
                "experiment_id {:?} is not a plain directory name",
                self.experiment_id
            ));
        }
        if self.repeats == 0 {
            out.push("repeats must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.convergence_threshold) {
            out.push("convergence_threshold must be in [0, 1]".into());
        }
        if self.net.hidden.contains(&0) {
            out.push("hidden layer sizes must be positive".into());
        }
        match &self.task {
            TaskSpec::Boundary { .. } => {
                if let Err(e) = self.boundary_spec(0).validate() {
                    out.push(e.to_string());
                }
            }
            TaskSpec::Ocr {
                source_path,
                idx_cache,
                split_fraction,
                ..
            } => {
                let cached = idx_cache.as_ref().is_some_and(|c| c.exists());
                if !source_path.exists() && !cached {
                    out.push(format!(
                        "dataset source {} does not exist",
                        source_path.display()
                    ));
                }
                if !(*split_fraction > 0.0 && *split_fraction < 1.0) {
                    out.push(format!("split_fraction {split_fraction} not in (0, 1)"));
                }
            }
        }
        match &self.method {
            // Row-count dependent checks happen once the data is loaded.
            Method::SynapticRl(cfg) => {
                if let Err(e) = cfg.validate(usize::MAX) {
                    out.push(e.to_string());
                }
            }
            Method::Gd(cfg) => {
                if let Err(e) = cfg.validate() {
                    out.push(e.to_string());
                }
            }
        }
        if let PolicySource::File(p) = &self.policy {
            if let Err(e) = QTable::load(p) {
                out.push(format!("policy file {}: {e}", p.display()));
            }
        }
        out
    }

    fn boundary_spec(&self, seed: u64) -> BoundaryTaskSpec {
        match &self.task {
            TaskSpec::Boundary {
                hidden_units,
                n_points,
                weight_range,
                data_range,
            } => BoundaryTaskSpec {
                hidden_units: *hidden_units,
                input_dim: 2,
                n_points: *n_points,
                weight_range: *weight_range,
                data_range: *data_range,
                seed,
            },
            TaskSpec::Ocr { .. } => unreachable!("boundary_spec on an OCR task"),
        }
    }

    fn learner(&self, seed: u64, input_dim: usize, output_dim: usize) -> Result<Mlp> {
        let loss = match self.task {
            TaskSpec::Boundary { .. } => LossKind::MeanSquaredEuclidean,
            TaskSpec::Ocr { .. } => LossKind::SoftmaxCrossEntropy,
        };
        let layers = chain(
            input_dim,
            &self.net.hidden,
            output_dim,
            self.net.activation,
            Activation::Identity,
        );
        Mlp::init(layers, loss, self.net.init, seed)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub repeats: Option<usize>,
    pub threads: Option<usize>,
    /// Replace an existing experiment directory.
    pub force: bool,
}

/// Min / max / mean / sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub stdev: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stdev = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            stdev,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// First logged iteration (or epoch) at which training accuracy reached the threshold.
    pub iterations_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub train_loss: Stats,
    pub train_accuracy: Stats,
    pub val_loss: Option<Stats>,
    pub val_accuracy: Option<Stats>,
}

impl Aggregate {
    pub fn from_repeats(rows: &[RepeatResult]) -> Option<Self> {
        let col = |f: fn(&RepeatResult) -> Option<f64>| -> Option<Vec<f64>> {
            rows.iter().map(f).collect()
        };
        Some(Self {
            train_loss: Stats::of(&col(|r| Some(r.train_loss))?)?,
            train_accuracy: Stats::of(&col(|r| Some(r.train_accuracy))?)?,
            val_loss: col(|r| r.val_loss).and_then(|v| Stats::of(&v)),
            val_accuracy: col(|r| r.val_accuracy).and_then(|v| Stats::of(&v)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment_id: String,
    pub manifest_sha256: String,
    pub method: String,
    pub repeats: Vec<RepeatResult>,
    pub aggregate: Aggregate,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Stats of the headline metric: validation accuracy when available, else training accuracy.
    pub fn headline(&self) -> Stats {
        self.aggregate
            .val_accuracy
            .unwrap_or(self.aggregate.train_accuracy)
    }
}

/// Per-repeat artifacts kept in memory for callers that want more than the summary.
#[derive(Debug, Clone)]
pub struct RepeatArtifacts {
    pub net: Mlp,
    pub policy: Option<QTable>,
    pub log: MetricsLog,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub artifacts: Vec<RepeatArtifacts>,
    pub wall_clock_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    TrainPolicy,
    ApplyPolicy,
    Gd,
}

/// Validates everything, then runs every repeat and writes all artifacts.
pub fn run(
    manifest: &ExperimentManifest,
    command: Command,
    policy_override: Option<&Path>,
    opts: &RunOptions,
) -> Result<RunReport> {
    let mut m = manifest.clone();
    m.apply(opts);
    if let Some(p) = policy_override {
        m.policy = PolicySource::File(p.to_path_buf());
    }
    let mut problems = m.problems();
    match (command, &mut m.method) {
        (Command::TrainPolicy, Method::SynapticRl(cfg)) => {
            if !cfg.train_policy {
                problems.push("train-policy requires method.train_policy = true".into());
            }
        }
        (Command::ApplyPolicy, Method::SynapticRl(cfg)) => {
            cfg.train_policy = false;
            if m.policy == PolicySource::Fresh {
                problems.push("apply-policy needs a policy file".into());
            }
        }
        (Command::Gd, Method::Gd(_)) => {}
        (c, _) => problems.push(format!("method kind does not match command {c:?}")),
    }
    let dir = m.experiment_dir();
    if dir.exists() && !opts.force {
        problems.push(format!(
            "{} already exists (pass --force to replace it)",
            dir.display()
        ));
    }
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems.join("; ")));
    }

    let hash = m.sha256()?;
    let policy = match &m.policy {
        PolicySource::File(p) => Some(QTable::load(p)?),
        PolicySource::Fresh => None,
    };
    let mut source = SourceCache::default();
    // Load data for every repeat before touching the output directory.
    let tasks = (0..m.repeats)
        .map(|r| prepare_task(&m, m.seed + r as u64, &mut source))
        .collect::<Result<Vec<_>>>()?;

    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("manifest.json"), &m.to_json()?)?;

    let mut results = Vec::with_capacity(m.repeats);
    let mut artifacts = Vec::with_capacity(m.repeats);
    let mut timing = Vec::with_capacity(m.repeats);
    for (r, task) in tasks.into_iter().enumerate() {
        let seed = m.seed + r as u64;
        let rdir = dir.join(r.to_string());
        fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
        let started = Instant::now();
        let net = m.learner(
            derive_seed(seed, INIT_STREAM),
            task.train.input_dim(),
            task.train.target_dim(),
        )?;
        let (net, learned, log) = match &m.method {
            Method::SynapticRl(cfg) => {
                let mut cfg = cfg.clone();
                cfg.seed = derive_seed(seed, TRAIN_STREAM);
                let q = match &policy {
                    Some(q) => q.clone(),
                    None => QTable::new(cfg.gamma, cfg.alpha_q)?,
                };
                let out = train(net, q, &task.train, task.val.as_ref(), &cfg)?;
                let learned = cfg.train_policy.then_some(out.policy);
                (out.net, learned, out.log)
            }
            Method::Gd(cfg) => {
                let mut cfg = cfg.clone();
                cfg.seed = derive_seed(seed, TRAIN_STREAM);
                let out = train_gd(net, &task.train, task.val.as_ref(), &cfg)?;
                (out.net, None, out.log)
            }
        };
        timing.push(started.elapsed().as_secs_f64());

        log.write_csv(&rdir.join("metrics.csv"))?;
        net.save(&rdir.join("net.json"), Some(&hash))?;
        if let Some(q) = &learned {
            q.save(&rdir.join("policy.json"), Some(&hash))?;
        }
        if let Some(t) = &task.target {
            t.save(&rdir.join("target.json"), Some(&hash))?;
        }
        let val_loss = task.val.as_ref().map(|v| net.loss(v)).transpose()?;
        let val_accuracy = task.val.as_ref().map(|v| net.accuracy(v)).transpose()?;
        results.push(RepeatResult {
            repeat: r,
            seed,
            train_loss: net.loss(&task.train)?,
            train_accuracy: net.accuracy(&task.train)?,
            val_loss,
            val_accuracy,
            iterations_to_threshold: log.first_iteration_reaching(m.convergence_threshold),
        });
        log::info!(
            "{} repeat {r}: train acc {:.4}{}",
            m.experiment_id,
            results[r].train_accuracy,
            val_accuracy
                .map(|v| format!(", val acc {v:.4}"))
                .unwrap_or_default()
        );
        artifacts.push(RepeatArtifacts {
            net,
            policy: learned,
            log,
        });
    }

    let summary = RunSummary {
        experiment_id: m.experiment_id.clone(),
        manifest_sha256: hash.clone(),
        method: match m.method {
            Method::SynapticRl(_) => "synaptic_rl".into(),
            Method::Gd(_) => "gd".into(),
        },
        aggregate: Aggregate::from_repeats(&results).expect("repeats >= 1"),
        repeats: results,
    };
    write(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    let timing_json = serde_json::json!({
        "manifest_sha256": hash,
        "wall_clock_seconds": timing,
    });
    write(
        &dir.join("timing.json"),
        &serde_json::to_string_pretty(&timing_json)?,
    )?;
    Ok(RunReport {
        summary,
        artifacts,
        wall_clock_seconds: timing,
    })
}

/// Writes the target net and labelled points of every repeat's boundary task.
pub fn gen_boundary(manifest: &ExperimentManifest, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let mut m = manifest.clone();
    m.apply(opts);
    if !matches!(m.task, TaskSpec::Boundary { .. }) {
        return Err(Error::InvalidConfig(
            "gen-boundary needs a boundary task".into(),
        ));
    }
    let spec = m.boundary_spec(0);
    spec.validate()?;
    let dir = m.experiment_dir();
    if dir.exists() && !opts.force {
        return Err(Error::InvalidConfig(format!(
            "{} already exists (pass --force to replace it)",
            dir.display()
        )));
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let hash = m.sha256()?;
    let mut written = Vec::new();
    for r in 0..m.repeats {
        let seed = m.seed + r as u64;
        let task =
            datasets::generate_boundary_task(&m.boundary_spec(derive_seed(seed, TASK_STREAM)))?;
        let rdir = dir.join(r.to_string());
        fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
        task.target.save(&rdir.join("target.json"), Some(&hash))?;
        let mut csv = String::from("x1,x2,label\n");
        for (x, y) in task.data.x().rows().into_iter().zip(task.data.y().iter()) {
            csv.push_str(&format!("{},{},{}\n", x[0], x[1], y));
        }
        let data_path = rdir.join("data.csv");
        write(&data_path, &csv)?;
        written.push(rdir);
    }
    write(&dir.join("manifest.json"), &m.to_json()?)?;
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Evaluates a saved net on the data of repeat `repeat` of the manifest.
pub fn eval(
    manifest: &ExperimentManifest,
    net: &Mlp,
    repeat: usize,
    opts: &RunOptions,
) -> Result<EvalReport> {
    let mut m = manifest.clone();
    m.apply(opts);
    let task = prepare_task(&m, m.seed + repeat as u64, &mut SourceCache::default())?;
    Ok(EvalReport {
        train_loss: net.loss(&task.train)?,
        train_accuracy: net.accuracy(&task.train)?,
        val_loss: task.val.as_ref().map(|v| net.loss(v)).transpose()?,
        val_accuracy: task.val.as_ref().map(|v| net.accuracy(v)).transpose()?,
    })
}

/// Difference of headline means with root-sum-square combined uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub delta: f64,
    pub sigma: f64,
}

pub fn compare(a: &RunSummary, b: &RunSummary) -> Comparison {
    let (sa, sb) = (a.headline(), b.headline());
    Comparison {
        delta: sa.mean - sb.mean,
        sigma: sa.stdev.hypot(sb.stdev),
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:+.4} ± {:.4} ({:+.2} ± {:.2} percentage points)",
            self.delta,
            self.sigma,
            100.0 * self.delta,
            100.0 * self.sigma
        )
    }
}

struct PreparedTask {
    train: Dataset,
    val: Option<Dataset>,
    target: Option<Mlp>,
}

#[derive(Default)]
struct SourceCache {
    loaded: HashMap<PathBuf, Dataset>,
}

fn prepare_task(
    m: &ExperimentManifest,
    seed: u64,
    cache: &mut SourceCache,
) -> Result<PreparedTask> {
    match &m.task {
        TaskSpec::Boundary { .. } => {
            let task =
                datasets::generate_boundary_task(&m.boundary_spec(derive_seed(seed, TASK_STREAM)))?;
            Ok(PreparedTask {
                train: task.data,
                val: None,
                target: Some(task.target),
            })
        }
        TaskSpec::Ocr {
            source_path,
            image_side,
            classes,
            split_fraction,
            idx_cache,
        } => {
            let key = idx_cache.clone().unwrap_or_else(|| source_path.clone());
            if !cache.loaded.contains_key(&key) {
                let data =
                    load_ocr_source(source_path, idx_cache.as_deref(), *image_side, *classes)?;
                cache.loaded.insert(key.clone(), data);
            }
            let all = &cache.loaded[&key];
            let (train, val) =
                datasets::split(all, *split_fraction, derive_seed(seed, SPLIT_STREAM))?;
            Ok(PreparedTask {
                train,
                val: Some(val),
                target: None,
            })
        }
    }
}

fn load_ocr_source(
    source: &Path,
    idx_cache: Option<&Path>,
    side: usize,
    classes: usize,
) -> Result<Dataset> {
    if let Some(cache) = idx_cache {
        if cache.exists() {
            return Ok(datasets::load_image_source(cache, side, classes)?.0);
        }
    }
    let (data, skipped) = datasets::load_image_source(source, side, classes)?;
    log::info!(
        "loaded {} images from {} ({skipped} skipped)",
        data.len(),
        source.display()
    );
    if let Some(cache) = idx_cache {
        datasets::export_idx_cache(&data, cache)?;
    }
    Ok(data)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
