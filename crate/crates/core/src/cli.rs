//! Command-line pipeline over a single JSON run configuration.
//!
//! Every command reads its inputs from the configuration and from artifacts
//! written by earlier commands into the output directory, and writes its own
//! artifacts atomically. Relative paths in a configuration file resolve
//! against the file's directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _, Result};
use clap::{Parser, Subcommand};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::augment::{build_similar_dataset, merge_datasets};
use crate::dataset::{load_dataset, write_dataset, Dataset, FeatureSchema};
use crate::dataset::{format_timestamp, holdout_date, time_holdout_split};
use crate::eval::{evaluate_table, ModelScores, DEFAULT_CLASS_THRESHOLD};
use crate::kernel::{compute_ranges, GowerKernel, RangeTable};
use crate::matcher::{
    confidence_from_votes, contributors_json, match_batch, pairwise_similarities, read_matches, votes,
    write_matches, SimilarityParams, SimilaritySummary, DEFAULT_CONFIDENCE_BUDGET, DEFAULT_PERCENTILE,
};
use crate::model::{predict_scores, read_scores, train_logistic, write_scores, LinearModel, TrainConfig};
use crate::probe::{probability_grid, recourse_probe, score_shell, similarity_shell, write_grid, write_shell};
use crate::probe::{AxisSpec, GridSpec};
use crate::synth::{pipeline_fixture, PipelineSpec};
use crate::util::{ceil_count, default_workers, nearest_rank};

pub const WORKERS_ENV: &str = "SIMMATCH_WORKERS";
pub const OUT_ENV: &str = "SIMMATCH_OUT";

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const RANGES_FILE: &str = "ranges.json";
pub const PARAMS_FILE: &str = "params.json";
pub const TRAIN_AUGMENTED_FILE: &str = "train_augmented.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const GRID_FILE: &str = "probe_grid.csv";
pub const SHELL_FILE: &str = "probe_shell.csv";
pub const RECOURSE_FILE: &str = "recourse.json";

pub const REAL_TESTSET: &str = "Test data (real)";
pub const SIMILAR_TESTSET: &str = "Test data (similar)";

const SIDES: [&str; 2] = ["train", "test"];

fn unlabeled_file(side: &str) -> String {
    format!("unlabeled_{side}.csv")
}
fn matches_file(side: &str) -> String {
    format!("matches_{side}.csv")
}
fn contributors_file(side: &str) -> String {
    format!("contributors_{side}.json")
}
fn similar_file(side: &str) -> String {
    format!("similar_{side}.csv")
}
fn model_file(name: &str, augmented: bool) -> String {
    format!("models/{}/{name}.json", if augmented { "augmented" } else { "plain" })
}
fn scores_file(name: &str, augmented: bool) -> String {
    format!("scores/{}/{name}.csv", if augmented { "augmented" } else { "plain" })
}

#[derive(Debug, Parser)]
#[command(name = "simmatch", version, about = "Confident similar-sample search, augmentation, evaluation and probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads for matching and probes; never changes any output.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Manual similarity threshold.
    #[arg(long, global = true)]
    pub d: Option<f64>,
    /// Manual confidence threshold.
    #[arg(long, global = true)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Time-holdout split of labeled and unlabeled inputs.
    Split,
    /// Pooled feature ranges for the kernel.
    Ranges,
    /// Similarity and confidence thresholds per side.
    Calibrate,
    /// Pseudo-labels and imputations for unlabeled rows.
    Match,
    /// Similar datasets and the augmented training set.
    Augment,
    /// Logistic models on plain and augmented training data.
    Train,
    /// Score files on the real and similar test sets.
    Score,
    /// AUC table and McNemar comparisons.
    Evaluate,
    /// Two-feature probability grid around a sample.
    ProbeGrid,
    /// Similarity shell and recourse report around a sample.
    ProbeShell,
    /// split through evaluate in one go; prints the table.
    Report,
    /// Writes a synthetic dataset, schema and configuration.
    Synth {
        #[arg(long, default_value_t = PipelineSpec::default().labeled)]
        labeled: usize,
        #[arg(long, default_value_t = PipelineSpec::default().unlabeled)]
        unlabeled: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Split => "split",
            Command::Ranges => "ranges",
            Command::Calibrate => "calibrate",
            Command::Match => "match",
            Command::Augment => "augment",
            Command::Train => "train",
            Command::Score => "score",
            Command::Evaluate => "evaluate",
            Command::ProbeGrid => "probe-grid",
            Command::ProbeShell => "probe-shell",
            Command::Report => "report",
            Command::Synth { .. } => "synth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub l1: f64,
    #[serde(default)]
    pub l2: f64,
}

/// Scores from a model trained elsewhere, covering every real and similar
/// test row (`id,score`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScores {
    pub name: String,
    #[serde(default)]
    pub augmented: bool,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridProbe {
    pub feature_x: String,
    pub feature_y: String,
    pub x: AxisSpec,
    pub y: AxisSpec,
}

fn default_shell_size() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellProbe {
    pub vary: Vec<String>,
    #[serde(default = "default_shell_size")]
    pub n: usize,
    /// Defaults to the calibrated train-side `d`.
    #[serde(default)]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Id of the base sample, looked up in the labeled then unlabeled input.
    pub sample: Option<String>,
    /// Model to probe; defaults to the first configured model.
    pub model: Option<String>,
    pub grid: Option<GridProbe>,
    pub shell: Option<ShellProbe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: PathBuf,
    pub labeled: PathBuf,
    pub unlabeled: PathBuf,
    pub out_dir: PathBuf,
    pub test_fraction: f64,
    pub percentile: f64,
    pub confidence_budget: f64,
    pub d: Option<f64>,
    pub c: Option<f64>,
    /// Model features; all similarity and estimation-only features when absent.
    pub features: Option<Vec<String>>,
    pub models: Vec<ModelSpec>,
    pub max_iter: usize,
    pub tol: f64,
    pub class_threshold: f64,
    pub external_scores: Vec<ExternalScores>,
    pub probe: ProbeConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            schema: "schema.json".into(),
            labeled: "labeled.csv".into(),
            unlabeled: "unlabeled.csv".into(),
            out_dir: "out".into(),
            test_fraction: 0.2,
            percentile: DEFAULT_PERCENTILE,
            confidence_budget: DEFAULT_CONFIDENCE_BUDGET,
            d: None,
            c: None,
            features: None,
            models: vec![
                ModelSpec { name: "logreg".into(), l1: 0.0, l2: train.l2 },
                ModelSpec { name: "logreg-l1".into(), l1: 0.01, l2: 0.0 },
            ],
            max_iter: train.max_iter,
            tol: train.tol,
            class_threshold: DEFAULT_CLASS_THRESHOLD,
            external_scores: Vec::new(),
            probe: ProbeConfig::default(),
            seed: train.seed,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("missing {}: run `{producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },
}

/// The machine-readable stderr line for a failed command.
pub fn error_line(command: &str, err: &anyhow::Error) -> String {
    let (kind, violations) = match err.downcast_ref::<CliError>() {
        Some(CliError::Validation(v)) => ("validation", v.clone()),
        Some(CliError::MissingArtifact { .. }) => ("missing-artifact", Vec::new()),
        None => ("error", Vec::new()),
    };
    json!({
        "status": "error",
        "command": command,
        "kind": kind,
        "message": format!("{err:#}"),
        "violations": violations,
    })
    .to_string()
}

/// Resolved configuration plus execution settings.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    base: PathBuf,
    pub out: PathBuf,
    pub workers: usize,
}

impl Context {
    pub fn new(config: RunConfig, base: impl Into<PathBuf>, out: Option<PathBuf>, workers: usize) -> Self {
        let base = base.into();
        let out = out.unwrap_or_else(|| base.join(&config.out_dir));
        Self { config, base, out, workers: workers.max(1) }
    }

    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let (mut config, base) = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading configuration {}", path.display()))?;
                let config: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, base)
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        if cli.d.is_some() {
            config.d = cli.d;
        }
        if cli.c.is_some() {
            config.c = cli.c;
        }
        Ok(Self::new(config, base, cli.out.clone(), cli.workers.unwrap_or_else(default_workers)))
    }

    fn input(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str, producer: &'static str) -> Result<PathBuf> {
        let path = self.artifact(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact { path, producer }.into())
        }
    }

    fn schema(&self) -> Result<FeatureSchema> {
        let path = self.input(&self.config.schema);
        FeatureSchema::load(&path).with_context(|| format!("loading schema {}", path.display()))
    }

    fn load_input(&self, path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
        let path = self.input(path);
        load_dataset(&path, schema).with_context(|| format!("loading {}", path.display()))
    }

    fn load_artifact(&self, name: &str, producer: &'static str, schema: &FeatureSchema) -> Result<Dataset> {
        let path = self.require(name, producer)?;
        load_dataset(&path, schema).with_context(|| format!("loading {}", path.display()))
    }

    fn ranges(&self) -> Result<RangeTable> {
        let path = self.require(RANGES_FILE, "ranges")?;
        RangeTable::load(&path).with_context(|| format!("loading {}", path.display()))
    }

    fn params(&self) -> Result<ParamsFile> {
        let path = self.require(PARAMS_FILE, "calibrate")?;
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn features(&self, schema: &FeatureSchema) -> Vec<String> {
        self.config.features.clone().unwrap_or_else(|| schema.value_features().to_vec())
    }

    fn train_config(&self, spec: &ModelSpec) -> TrainConfig {
        TrainConfig {
            l1: spec.l1,
            l2: spec.l2,
            max_iter: self.config.max_iter,
            tol: self.config.tol,
            seed: self.config.seed,
        }
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.artifact(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_csv(&self, name: &str, data: &Dataset) -> Result<PathBuf> {
        let mut bytes = Vec::new();
        write_dataset(data, &mut bytes)?;
        self.write(name, &bytes)
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| anyhow!("writing {}: {}", path.display(), e.error))?;
    Ok(())
}

fn unit_violation(violations: &mut Vec<String>, name: &str, value: f64) {
    if !(0.0..=1.0).contains(&value) {
        violations.push(format!("{name} = {value} is outside [0, 1]"));
    }
}

fn needs_inputs(command: &Command) -> bool {
    matches!(command, Command::Split | Command::Ranges | Command::Report | Command::ProbeGrid | Command::ProbeShell)
}

fn needs_models(command: &Command) -> bool {
    matches!(
        command,
        Command::Train | Command::Score | Command::Evaluate | Command::Report | Command::ProbeGrid | Command::ProbeShell
    )
}

impl Context {
    /// Every problem with the configuration for `command`.
    pub fn validate(&self, command: &Command) -> Vec<String> {
        let cfg = &self.config;
        let mut v = Vec::new();
        if matches!(command, Command::Synth { .. }) {
            return v;
        }
        unit_violation(&mut v, "test_fraction", cfg.test_fraction);
        unit_violation(&mut v, "percentile", cfg.percentile);
        unit_violation(&mut v, "confidence_budget", cfg.confidence_budget);
        unit_violation(&mut v, "class_threshold", cfg.class_threshold);
        if let Some(d) = cfg.d {
            unit_violation(&mut v, "d", d);
        }
        if let Some(c) = cfg.c {
            unit_violation(&mut v, "c", c);
        }

        let schema_path = self.input(&cfg.schema);
        let schema = match FeatureSchema::load(&schema_path) {
            Ok(s) => Some(s),
            Err(e) => {
                v.push(format!("schema {}: {e}", schema_path.display()));
                None
            }
        };
        if needs_inputs(command) {
            for (what, path) in [("labeled", &cfg.labeled), ("unlabeled", &cfg.unlabeled)] {
                let path = self.input(path);
                if !path.is_file() {
                    v.push(format!("{what} input {} does not exist", path.display()));
                }
            }
        }
        if let Some(schema) = &schema {
            for f in cfg.features.iter().flatten() {
                if schema.value_index(f).is_none() {
                    v.push(format!("feature `{f}` is not a similarity or estimation-only column of the schema"));
                }
            }
            if cfg.features.as_ref().is_some_and(Vec::is_empty) {
                v.push("features is empty".into());
            }
        }

        if needs_models(command) {
            if cfg.models.is_empty() {
                v.push("models is empty".into());
            }
            if cfg.max_iter == 0 {
                v.push("max_iter must be positive".into());
            }
            if !(cfg.tol > 0.0) {
                v.push(format!("tol = {} must be positive", cfg.tol));
            }
            let mut names: Vec<&str> = Vec::new();
            for m in &cfg.models {
                if m.name.is_empty() || !m.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                    v.push(format!("model name `{}` must be non-empty and use only [A-Za-z0-9._-]", m.name));
                }
                if !(m.l1 >= 0.0 && m.l1.is_finite() && m.l2 >= 0.0 && m.l2.is_finite()) {
                    v.push(format!("model `{}`: l1 and l2 must be finite and >= 0", m.name));
                }
                if names.contains(&m.name.as_str()) {
                    v.push(format!("model name `{}` is repeated", m.name));
                }
                names.push(&m.name);
            }
            if matches!(command, Command::Evaluate | Command::Report) {
                for e in &cfg.external_scores {
                    if names.contains(&e.name.as_str()) && !e.augmented {
                        v.push(format!("external model `{}` clashes with a trained model", e.name));
                    }
                    let path = self.input(&e.path);
                    if !path.is_file() {
                        v.push(format!("external scores {} does not exist", path.display()));
                    }
                }
            }
        }

        if matches!(command, Command::ProbeGrid | Command::ProbeShell) {
            let probe = &cfg.probe;
            if probe.sample.is_none() {
                v.push("probe.sample is required".into());
            }
            if let Some(model) = &probe.model {
                if !cfg.models.iter().any(|m| &m.name == model) {
                    v.push(format!("probe.model `{model}` is not a configured model"));
                }
            }
            let feature_ok = |name: &str| schema.as_ref().is_none_or(|s| s.value_index(name).is_some());
            match (command, &probe.grid, &probe.shell) {
                (Command::ProbeGrid, None, _) => v.push("probe.grid is required".into()),
                (Command::ProbeGrid, Some(g), _) => {
                    for f in [&g.feature_x, &g.feature_y] {
                        if !feature_ok(f) {
                            v.push(format!("probe.grid feature `{f}` is not in the schema"));
                        }
                    }
                    for (axis, spec) in [("x", &g.x), ("y", &g.y)] {
                        if spec.count == 0 || !(spec.min <= spec.max) {
                            v.push(format!("probe.grid.{axis} needs count >= 1 and min <= max"));
                        }
                    }
                }
                (Command::ProbeShell, _, None) => v.push("probe.shell is required".into()),
                (Command::ProbeShell, _, Some(s)) => {
                    if s.vary.is_empty() {
                        v.push("probe.shell.vary is empty".into());
                    }
                    for f in &s.vary {
                        if !feature_ok(f) {
                            v.push(format!("probe.shell feature `{f}` is not in the schema"));
                        }
                    }
                    if s.n == 0 {
                        v.push("probe.shell.n must be positive".into());
                    }
                    if let Some(d) = s.d {
                        unit_violation(&mut v, "probe.shell.d", d);
                    }
                }
                _ => {}
            }
        }

        let outputs = fs::canonicalize(&self.out).ok();
        if let Some(out) = outputs {
            for path in [&cfg.schema, &cfg.labeled, &cfg.unlabeled] {
                if let Ok(input) = fs::canonicalize(self.input(path)) {
                    if input.parent() == Some(out.as_path())
                        && [TRAIN_FILE, TEST_FILE, TRAIN_AUGMENTED_FILE, RANGES_FILE, PARAMS_FILE]
                            .iter()
                            .any(|n| input.file_name() == Some(n.as_ref()))
                    {
                        v.push(format!("input {} would be overwritten by an output", input.display()));
                    }
                }
            }
        }
        v
    }
}

/// Runs one command and returns its stdout text.
pub fn run(cli: &Cli) -> Result<String> {
    let ctx = Context::from_cli(cli)?;
    execute(&ctx, &cli.command)
}

pub fn execute(ctx: &Context, command: &Command) -> Result<String> {
    let violations = ctx.validate(command);
    if !violations.is_empty() {
        return Err(CliError::Validation(violations).into());
    }
    match command {
        Command::Split => split(ctx),
        Command::Ranges => ranges(ctx),
        Command::Calibrate => calibrate(ctx),
        Command::Match => run_match(ctx),
        Command::Augment => augment(ctx),
        Command::Train => train(ctx),
        Command::Score => score(ctx),
        Command::Evaluate => evaluate(ctx).map(|(line, _)| line),
        Command::ProbeGrid => probe_grid(ctx),
        Command::ProbeShell => probe_shell(ctx),
        Command::Report => report(ctx),
        Command::Synth { labeled, unlabeled } => synth(ctx, *labeled, *unlabeled),
    }
}

fn split(ctx: &Context) -> Result<String> {
    let cfg = &ctx.config;
    let schema = ctx.schema()?;
    let labeled = ctx.load_input(&cfg.labeled, &schema)?;
    let unlabeled = ctx.load_input(&cfg.unlabeled, &schema)?;
    let (train, test) = time_holdout_split(&labeled, cfg.test_fraction)?;
    let holdout = holdout_date(&labeled, ceil_count(cfg.test_fraction, labeled.len()));
    let (unl_train, unl_test) = match holdout {
        Some(h) => (
            unlabeled.filtered(format!("{} | before holdout", unlabeled.provenance), |r| r.timestamp < h),
            unlabeled.filtered(format!("{} | at or after holdout", unlabeled.provenance), |r| r.timestamp >= h),
        ),
        None => (unlabeled.clone(), unlabeled.filtered("empty", |_| false)),
    };
    ctx.write_csv(TRAIN_FILE, &train)?;
    ctx.write_csv(TEST_FILE, &test)?;
    ctx.write_csv(&unlabeled_file("train"), &unl_train)?;
    ctx.write_csv(&unlabeled_file("test"), &unl_test)?;
    let holdout_text = holdout.as_ref().map(format_timestamp);
    ctx.write_json(
        SPLIT_FILE,
        &json!({
            "config": cfg,
            "holdout": holdout_text,
            "train": train.len(),
            "test": test.len(),
            "unlabeled_train": unl_train.len(),
            "unlabeled_test": unl_test.len(),
        }),
    )?;
    Ok(format!(
        "split: holdout {} | labeled train {} test {} | unlabeled train {} test {} -> {}",
        holdout_text.as_deref().unwrap_or("none"),
        train.len(),
        test.len(),
        unl_train.len(),
        unl_test.len(),
        ctx.out.display()
    ))
}

fn ranges(ctx: &Context) -> Result<String> {
    let cfg = &ctx.config;
    let schema = ctx.schema()?;
    let labeled = ctx.load_input(&cfg.labeled, &schema)?;
    let unlabeled = ctx.load_input(&cfg.unlabeled, &schema)?;
    let table = compute_ranges(&[&labeled, &unlabeled], &schema)?;
    let path = ctx.write(RANGES_FILE, format!("{}\n", table.to_json()).as_bytes())?;
    Ok(format!("ranges: {} similarity features from {} rows -> {}", table.ranges.len(), labeled.len() + unlabeled.len(), path.display()))
}

/// Thresholds for one side of the holdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideCalibration {
    pub labeled: usize,
    pub unlabeled: usize,
    pub d: f64,
    pub d_source: String,
    pub c: f64,
    pub c_source: String,
    /// Unlabeled rows with `|t| > c`.
    pub matched: usize,
    pub matched_fraction: f64,
    pub similarity: Option<SimilaritySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub config: RunConfig,
    pub train: SideCalibration,
    pub test: SideCalibration,
}

impl ParamsFile {
    fn side(&self, side: &str) -> &SideCalibration {
        if side == "train" {
            &self.train
        } else {
            &self.test
        }
    }
}

struct SideData {
    labeled: Dataset,
    unlabeled: Dataset,
}

fn side_data(ctx: &Context, schema: &FeatureSchema, side: &str) -> Result<SideData> {
    let labeled_name = if side == "train" { TRAIN_FILE } else { TEST_FILE };
    Ok(SideData {
        labeled: ctx.load_artifact(labeled_name, "split", schema)?,
        unlabeled: ctx.load_artifact(&unlabeled_file(side), "split", schema)?,
    })
}

fn calibrate(ctx: &Context) -> Result<String> {
    let cfg = &ctx.config;
    let schema = ctx.schema()?;
    let table = ctx.ranges()?;
    let kernel = GowerKernel::new(&schema, &table)?;
    let mut sides = Vec::new();
    for side in SIDES {
        let data = side_data(ctx, &schema, side)?;
        let sims = if data.labeled.len() >= 2 {
            pairwise_similarities(&data.labeled, &kernel, ctx.workers)?
        } else {
            Vec::new()
        };
        let (d, d_source) = match cfg.d {
            Some(d) => (d, "manual".to_string()),
            None => (
                nearest_rank(&sims, cfg.percentile).ok_or_else(|| {
                    anyhow!("{side} side has {} labeled rows; at least two are needed to calibrate d", data.labeled.len())
                })?,
                format!("nearest-rank percentile {} of {} labeled pairs", cfg.percentile, sims.len()),
            ),
        };
        let t = if data.unlabeled.is_empty() {
            Vec::new()
        } else {
            votes(&data.unlabeled, &data.labeled, &kernel, d, ctx.workers)?
        };
        let (c, c_source) = match cfg.c {
            Some(c) => (c, "manual".to_string()),
            None => (
                confidence_from_votes(&t, cfg.confidence_budget),
                format!("matched fraction below {}", cfg.confidence_budget),
            ),
        };
        let matched = t.iter().flatten().filter(|v| v.abs() > c).count();
        sides.push(SideCalibration {
            labeled: data.labeled.len(),
            unlabeled: data.unlabeled.len(),
            d,
            d_source,
            c,
            c_source,
            matched,
            matched_fraction: if t.is_empty() { 0.0 } else { matched as f64 / t.len() as f64 },
            similarity: SimilaritySummary::from_sorted(&sims),
        });
    }
    let test = sides.pop().expect("two sides");
    let train = sides.pop().expect("two sides");
    let line = format!(
        "calibrate: train d {:.6} c {:.6} matched {}/{} | test d {:.6} c {:.6} matched {}/{} -> {}",
        train.d,
        train.c,
        train.matched,
        train.unlabeled,
        test.d,
        test.c,
        test.matched,
        test.unlabeled,
        ctx.artifact(PARAMS_FILE).display()
    );
    ctx.write_json(PARAMS_FILE, &ParamsFile { config: cfg.clone(), train, test })?;
    Ok(line)
}

fn side_params(ctx: &Context, params: &ParamsFile, side: &str) -> Result<SimilarityParams> {
    let calibrated = params.side(side);
    let d = ctx.config.d.unwrap_or(calibrated.d);
    let c = ctx.config.c.unwrap_or(calibrated.c);
    Ok(SimilarityParams::new(d, c, format!("{side} side: d {}, c {}", calibrated.d_source, calibrated.c_source))?)
}

fn run_match(ctx: &Context) -> Result<String> {
    let schema = ctx.schema()?;
    let table = ctx.ranges()?;
    let params = ctx.params()?;
    let kernel = GowerKernel::new(&schema, &table)?;
    let mut parts = Vec::new();
    for side in SIDES {
        let data = side_data(ctx, &schema, side)?;
        let p = side_params(ctx, &params, side)?;
        let results = match_batch(&data.unlabeled, &data.labeled, &kernel, &p, ctx.workers)?;
        let mut bytes = Vec::new();
        write_matches(&results, &schema, &mut bytes)?;
        ctx.write(&matches_file(side), &bytes)?;
        ctx.write_json(&contributors_file(side), &contributors_json(&results))?;
        let confident = results.iter().filter(|r| r.estimate.is_confident()).count();
        let matched = results.iter().filter(|r| r.vote.is_some()).count();
        parts.push(format!("{side} {confident} confident of {matched} matched / {}", results.len()));
    }
    Ok(format!("match: {} -> {}", parts.join(" | "), ctx.out.display()))
}

fn load_matches(ctx: &Context, schema: &FeatureSchema, side: &str) -> Result<Vec<crate::matcher::MatchResult>> {
    let path = ctx.require(&matches_file(side), "match")?;
    let file = fs::File::open(&path)?;
    read_matches(BufReader::new(file), schema).with_context(|| format!("reading {}", path.display()))
}

fn augment(ctx: &Context) -> Result<String> {
    let schema = ctx.schema()?;
    let train_side = side_data(ctx, &schema, "train")?;
    let test_side = side_data(ctx, &schema, "test")?;

    let train_matches = load_matches(ctx, &schema, "train")?;
    let similar_train = build_similar_dataset(&train_matches, &train_side.unlabeled)?;
    ctx.write_csv(&similar_file("train"), &similar_train)?;
    let augmented = merge_datasets(&train_side.labeled, &similar_train)?;
    ctx.write_csv(TRAIN_AUGMENTED_FILE, &augmented)?;

    // Prefixed ids keep the similar test rows distinct from real test rows
    // in shared score files.
    let test_matches = load_matches(ctx, &schema, "test")?;
    let similar_test = build_similar_dataset(&test_matches, &test_side.unlabeled)?;
    let similar_test = merge_datasets(&Dataset::empty(schema.clone(), "none"), &similar_test)?;
    ctx.write_csv(&similar_file("test"), &similar_test)?;

    Ok(format!(
        "augment: train {} real + {} similar = {} | similar test {} -> {}",
        train_side.labeled.len(),
        similar_train.len(),
        augmented.len(),
        similar_test.len(),
        ctx.out.display()
    ))
}

fn train(ctx: &Context) -> Result<String> {
    let schema = ctx.schema()?;
    let plain = ctx.load_artifact(TRAIN_FILE, "split", &schema)?;
    let augmented = ctx.load_artifact(TRAIN_AUGMENTED_FILE, "augment", &schema)?;
    let features = ctx.features(&schema);
    let mut parts = Vec::new();
    for spec in &ctx.config.models {
        for (data, is_aug) in [(&plain, false), (&augmented, true)] {
            let display = if is_aug { format!("{}*", spec.name) } else { spec.name.clone() };
            let model = train_logistic(display.clone(), data, &features, &ctx.train_config(spec))
                .with_context(|| format!("training `{display}`"))?;
            ctx.write(&model_file(&spec.name, is_aug), format!("{}\n", model.to_json()).as_bytes())?;
            parts.push(format!("{display} ({:?}, {} it)", model.stop_reason, model.iterations));
        }
    }
    Ok(format!("train: {} -> {}", parts.join(", "), ctx.artifact("models").display()))
}

fn load_model(ctx: &Context, name: &str, augmented: bool) -> Result<LinearModel> {
    let path = ctx.require(&model_file(name, augmented), "train")?;
    LinearModel::load(&path).with_context(|| format!("loading {}", path.display()))
}

fn score(ctx: &Context) -> Result<String> {
    let schema = ctx.schema()?;
    let test = ctx.load_artifact(TEST_FILE, "split", &schema)?;
    let similar_test = ctx.load_artifact(&similar_file("test"), "augment", &schema)?;
    let mut written = 0;
    for spec in &ctx.config.models {
        for augmented in [false, true] {
            let model = load_model(ctx, &spec.name, augmented)?;
            let real = predict_scores(&model, &test)?;
            let similar = predict_scores(&model, &similar_test)?;
            let all = crate::model::ScoreFile::concat(model.name.clone(), &[real, similar])?;
            let mut bytes = Vec::new();
            write_scores(&all, &mut bytes)?;
            ctx.write(&scores_file(&spec.name, augmented), &bytes)?;
            written += 1;
        }
    }
    Ok(format!(
        "score: {written} models on {} real + {} similar test rows -> {}",
        test.len(),
        similar_test.len(),
        ctx.artifact("scores").display()
    ))
}

fn evaluate(ctx: &Context) -> Result<(String, crate::eval::EvalReport)> {
    let cfg = &ctx.config;
    let schema = ctx.schema()?;
    let test = ctx.load_artifact(TEST_FILE, "split", &schema)?;
    let similar_test = ctx.load_artifact(&similar_file("test"), "augment", &schema)?;
    let mut models = Vec::new();
    for spec in &cfg.models {
        for augmented in [false, true] {
            let path = ctx.require(&scores_file(&spec.name, augmented), "score")?;
            let scores = read_scores(BufReader::new(fs::File::open(&path)?), spec.name.clone())
                .with_context(|| format!("reading {}", path.display()))?;
            models.push(ModelScores { name: spec.name.clone(), augmented, scores });
        }
    }
    for ext in &cfg.external_scores {
        let path = ctx.input(&ext.path);
        let scores = read_scores(BufReader::new(fs::File::open(&path)?), ext.name.clone())
            .with_context(|| format!("reading external scores {}", path.display()))?;
        models.push(ModelScores { name: ext.name.clone(), augmented: ext.augmented, scores });
    }
    let testsets = vec![(REAL_TESTSET.to_string(), test), (SIMILAR_TESTSET.to_string(), similar_test)];
    let mut report = evaluate_table(&models, &testsets, cfg.class_threshold)?;
    let mut extra = IndexMap::new();
    extra.insert("config".to_string(), serde_json::to_value(cfg)?);
    if let Ok(params) = ctx.params() {
        extra.insert(
            "thresholds".to_string(),
            json!({
                "train": {"d": params.train.d, "c": params.train.c},
                "test": {"d": params.test.d, "c": params.test.c},
            }),
        );
    }
    report.metadata.extra = extra;
    ctx.write(REPORT_JSON, format!("{}\n", report.to_json()).as_bytes())?;
    ctx.write(REPORT_TEXT, report.to_text().as_bytes())?;
    let line = format!(
        "evaluate: {} models x {} test sets, {} comparisons -> {}",
        report.models.len(),
        report.testsets.len(),
        report.comparisons.len(),
        ctx.artifact(REPORT_JSON).display()
    );
    Ok((line, report))
}

fn probe_base(ctx: &Context, schema: &FeatureSchema) -> Result<crate::dataset::Sample> {
    let id = ctx.config.probe.sample.as_deref().expect("validated");
    for path in [&ctx.config.labeled, &ctx.config.unlabeled] {
        let data = ctx.load_input(path, schema)?;
        if let Some(sample) = data.find(id) {
            return Ok(sample.clone());
        }
    }
    Err(anyhow!("probe sample `{id}` is in neither the labeled nor the unlabeled input"))
}

fn probe_model(ctx: &Context) -> Result<LinearModel> {
    let name = ctx.config.probe.model.clone().unwrap_or_else(|| ctx.config.models[0].name.clone());
    load_model(ctx, &name, false)
}

fn probe_grid(ctx: &Context) -> Result<String> {
    let schema = ctx.schema()?;
    let grid_cfg = ctx.config.probe.grid.as_ref().expect("validated");
    let model = probe_model(ctx)?;
    let base = probe_base(ctx, &schema)?;
    let spec = GridSpec { x: grid_cfg.x, y: grid_cfg.y };
    let grid = probability_grid(&model, &schema, &base, &grid_cfg.feature_x, &grid_cfg.feature_y, &spec, ctx.workers)?;
    let mut bytes = Vec::new();
    write_grid(&grid, &mut bytes)?;
    let path = ctx.write(GRID_FILE, &bytes)?;
    let (lo, hi) = grid
        .probabilities
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    Ok(format!(
        "probe-grid: {} around `{}` over {} x {}, scores {lo:.4}..{hi:.4} -> {}",
        model.name,
        base.id,
        grid.x_values.len(),
        grid.y_values.len(),
        path.display()
    ))
}

fn probe_shell(ctx: &Context) -> Result<String> {
    let cfg = &ctx.config;
    let schema = ctx.schema()?;
    let shell_cfg = cfg.probe.shell.as_ref().expect("validated");
    let table = ctx.ranges()?;
    let d = match shell_cfg.d {
        Some(d) => d,
        None => ctx.params()?.train.d,
    };
    let model = probe_model(ctx)?;
    let base = probe_base(ctx, &schema)?;
    let shell = similarity_shell(&schema, &base, &shell_cfg.vary, &table, d, shell_cfg.n, cfg.seed, ctx.workers)?;
    let (_, scored) = score_shell(&model, &schema, &base, &shell, cfg.class_threshold, ctx.workers)?;
    let mut bytes = Vec::new();
    write_shell(&schema, &shell_cfg.vary, &scored, &mut bytes)?;
    ctx.write(SHELL_FILE, &bytes)?;
    let report = recourse_probe(&model, &schema, &base, &shell, cfg.class_threshold, ctx.workers)?;
    let path = ctx.write_json(
        RECOURSE_FILE,
        &json!({"config": cfg, "model": model.name, "d": d, "recourse": report}),
    )?;
    Ok(format!(
        "probe-shell: {} samples around `{}` at d {d:.6}, {} crossings; {} -> {}",
        shell.len(),
        base.id,
        report.crossings,
        report.message,
        path.display()
    ))
}

fn report(ctx: &Context) -> Result<String> {
    let mut out = String::new();
    for step in [split, ranges, calibrate, run_match, augment, train, score] {
        out.push_str(&step(ctx)?);
        out.push('\n');
    }
    let (line, report) = evaluate(ctx)?;
    let _ = writeln!(out, "{line}\n");
    out.push_str(&report.to_text());
    Ok(out.trim_end().to_string())
}

fn synth(ctx: &Context, labeled: usize, unlabeled: usize) -> Result<String> {
    let seed = ctx.config.seed;
    let fixture = pipeline_fixture(PipelineSpec { labeled, unlabeled, seed });
    let schema_json = serde_json::to_string_pretty(&fixture.schema)?;
    ctx.write("schema.json", format!("{schema_json}\n").as_bytes())?;
    ctx.write_csv("labeled.csv", &fixture.labeled)?;
    ctx.write_csv("unlabeled.csv", &fixture.unlabeled)?;
    let sample = Some(fixture.boundary_sample.clone());
    let config = RunConfig {
        out_dir: "run".into(),
        probe: ProbeConfig {
            sample,
            model: None,
            grid: Some(GridProbe {
                feature_x: "s1".into(),
                feature_y: "s2".into(),
                x: AxisSpec { min: -3.0, max: 3.0, count: 25 },
                y: AxisSpec { min: -3.0, max: 3.0, count: 25 },
            }),
            shell: Some(ShellProbe { vary: vec!["s1".into(), "s2".into(), "s3".into()], n: 200, d: None }),
        },
        ..RunConfig::default()
    };
    let path = ctx.write_json("config.json", &config)?;
    Ok(format!(
        "synth: {} labeled + {} unlabeled rows (seed {seed}) -> {}",
        fixture.labeled.len(),
        fixture.unlabeled.len(),
        path.display()
    ))
}
