//! Regularized logistic regression and score files.
//!
//! Features are standardized on training statistics (missing cells take
//! the training mean), then the mean logistic loss plus `l2/2 * |w|^2` is
//! minimized by full-batch proximal gradient descent; the `l1 * |w|_1`
//! term is handled by soft-thresholding. Step sizes come from backtracking
//! on the smooth part, so the full objective never increases between
//! accepted iterations. The intercept is not penalized.
//!
//! Models this crate does not train plug in through [`ScoreFile`]s.

use std::collections::{HashMap, HashSet};
use std::io::{self, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, FeatureSchema, Sample};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data has only {0} labels; both classes are required")]
    SingleClass(&'static str),
    #[error("training row `{0}` has no label")]
    MissingLabel(String),
    #[error("feature `{0}` is not a value feature of the schema")]
    UnknownFeature(String),
    #[error("regularization strengths must be finite and non-negative (l1 = {l1}, l2 = {l2})")]
    InvalidRegularization { l1: f64, l2: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("no score for id `{0}`")]
    MissingScore(String),
    #[error("score file row {row}: {message}")]
    ScoreRow { row: usize, message: String },
    #[error("score file repeats id `{id}` (row {row})")]
    DuplicateScoreId { row: usize, id: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invalid model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Hyperparameters for [`train_logistic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l1: f64,
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the proximal gradient-mapping norm falls to this value.
    pub tol: f64,
    /// Recorded with the model; training itself starts from zero weights
    /// and draws no random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { l1: 0.0, l2: 0.01, max_iter: 5000, tol: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    IterationBudget,
    /// Backtracking could not find a decreasing step; the iterate is
    /// stationary to machine precision.
    NoProgress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub l1: f64,
    pub l2: f64,
}

/// Trained linear scorer. Weights apply to standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub name: String,
    pub weights: IndexMap<String, f64>,
    pub intercept: f64,
    pub feature_means: IndexMap<String, f64>,
    pub feature_scales: IndexMap<String, f64>,
    pub regularization: Regularization,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub objective: f64,
    #[serde(default)]
    pub dropped_features: Vec<String>,
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Smooth part of the training objective over a standardized design:
/// mean logistic loss plus `l2/2 * |w|^2`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    l2: f64,
}

impl LogisticObjective {
    /// `targets` are labels in {-1, +1}.
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>, l2: f64) -> Self {
        assert_eq!(rows.len(), targets.len(), "one target per row");
        Self { rows, targets, l2 }
    }

    pub fn dimension(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn margin(&self, row: &[f64], weights: &[f64], intercept: f64) -> f64 {
        intercept + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>()
    }

    pub fn value(&self, weights: &[f64], intercept: f64) -> f64 {
        let n = self.rows.len() as f64;
        let loss: f64 = self
            .rows
            .iter()
            .zip(&self.targets)
            .map(|(row, y)| softplus(-y * self.margin(row, weights, intercept)))
            .sum();
        loss / n + 0.5 * self.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient with respect to `(weights, intercept)`.
    pub fn gradient(&self, weights: &[f64], intercept: f64) -> (Vec<f64>, f64) {
        let n = self.rows.len() as f64;
        let mut grad = vec![0.0; weights.len()];
        let mut grad_b = 0.0;
        for (row, y) in self.rows.iter().zip(&self.targets) {
            // d/dz softplus(-y z) = -y * sigma(-y z)
            let coef = -y * logistic(-y * self.margin(row, weights, intercept));
            grad_b += coef;
            for (g, x) in grad.iter_mut().zip(row) {
                *g += coef * x;
            }
        }
        for (g, w) in grad.iter_mut().zip(weights) {
            *g = *g / n + self.l2 * w;
        }
        (grad, grad_b / n)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Per-iteration record from [`fit_proximal`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Full objective (smooth part plus l1) at the start and after each
    /// accepted iteration.
    pub objective: Vec<f64>,
    pub stop_reason: StopReason,
}

/// Proximal gradient descent with backtracking from zero weights.
pub fn fit_proximal(
    objective: &LogisticObjective,
    l1: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, f64, FitTrace) {
    let p = objective.dimension();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let l1_norm = |w: &[f64]| w.iter().map(|x| x.abs()).sum::<f64>();
    let mut smooth = objective.value(&w, b);
    let mut full = smooth + l1 * l1_norm(&w);
    let mut history = vec![full];
    let mut step = 1.0;
    let mut stop = StopReason::IterationBudget;

    for _ in 0..max_iter {
        let (gw, gb) = objective.gradient(&w, b);
        let accepted = loop {
            let w_new: Vec<f64> =
                w.iter().zip(&gw).map(|(wi, gi)| soft_threshold(wi - step * gi, step * l1)).collect();
            let b_new = b - step * gb;
            let dw: Vec<f64> = w_new.iter().zip(&w).map(|(a, c)| a - c).collect();
            let db = b_new - b;
            let linear = gw.iter().zip(&dw).map(|(g, d)| g * d).sum::<f64>() + gb * db;
            let dist2 = dw.iter().map(|d| d * d).sum::<f64>() + db * db;
            let smooth_new = objective.value(&w_new, b_new);
            let full_new = smooth_new + l1 * l1_norm(&w_new);
            if smooth_new <= smooth + linear + dist2 / (2.0 * step) && full_new <= full {
                break Some((w_new, b_new, smooth_new, full_new, dist2.sqrt() / step));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((w_new, b_new, smooth_new, full_new, mapping_norm)) = accepted else {
            stop = StopReason::NoProgress;
            break;
        };
        w = w_new;
        b = b_new;
        smooth = smooth_new;
        full = full_new;
        history.push(full);
        if mapping_norm <= tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        step = (step * 2.0).min(1e6);
    }
    (w, b, FitTrace { objective: history, stop_reason: stop })
}

fn feature_columns(schema: &FeatureSchema, features: &[String]) -> Result<Vec<usize>, ModelError> {
    features
        .iter()
        .map(|f| schema.value_index(f).ok_or_else(|| ModelError::UnknownFeature(f.clone())))
        .collect()
}

/// Trains on the labeled rows of `train` using the named features.
///
/// Features that are constant (or entirely missing) in `train` are dropped
/// with a warning and listed in [`LinearModel::dropped_features`].
pub fn train_logistic(
    name: impl Into<String>,
    train: &Dataset,
    features: &[String],
    config: &TrainConfig,
) -> Result<LinearModel, ModelError> {
    let (l1, l2) = (config.l1, config.l2);
    if !(l1.is_finite() && l2.is_finite() && l1 >= 0.0 && l2 >= 0.0) {
        return Err(ModelError::InvalidRegularization { l1, l2 });
    }
    if !(config.tol > 0.0) {
        return Err(ModelError::InvalidTolerance(config.tol));
    }
    let schema = train.schema();
    let columns = feature_columns(schema, features)?;
    let mut targets = Vec::with_capacity(train.len());
    for row in train.rows() {
        targets.push(row.label.ok_or_else(|| ModelError::MissingLabel(row.id.clone()))?.value());
    }
    if !targets.iter().any(|&y| y > 0.0) {
        return Err(ModelError::SingleClass("negative"));
    }
    if !targets.iter().any(|&y| y < 0.0) {
        return Err(ModelError::SingleClass("positive"));
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (name, &col) in features.iter().zip(&columns) {
        let present: Vec<f64> = train.rows().iter().filter_map(|r| r.values[col]).collect();
        let n = present.len() as f64;
        let mean = present.iter().sum::<f64>() / n;
        let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = var.sqrt();
        if present.is_empty() || !(scale > 0.0) || !scale.is_finite() {
            log::warn!("dropping feature `{name}`: zero variance in training data");
            dropped.push(name.clone());
        } else {
            kept.push((name.clone(), col, mean, scale));
        }
    }

    let design: Vec<Vec<f64>> = train
        .rows()
        .iter()
        .map(|r| {
            kept.iter().map(|(_, col, mean, scale)| r.values[*col].map_or(0.0, |v| (v - mean) / scale)).collect()
        })
        .collect();
    let objective = LogisticObjective::new(design, targets, l2);
    let (weights, intercept, trace) = fit_proximal(&objective, l1, config.max_iter, config.tol);

    Ok(LinearModel {
        name: name.into(),
        weights: kept.iter().zip(&weights).map(|((n, ..), w)| (n.clone(), *w)).collect(),
        intercept,
        feature_means: kept.iter().map(|(n, _, m, _)| (n.clone(), *m)).collect(),
        feature_scales: kept.iter().map(|(n, _, _, s)| (n.clone(), *s)).collect(),
        regularization: Regularization { l1, l2 },
        max_iter: config.max_iter,
        tol: config.tol,
        seed: config.seed,
        stop_reason: trace.stop_reason,
        iterations: trace.objective.len() - 1,
        objective: *trace.objective.last().expect("initial objective"),
        dropped_features: dropped,
    })
}

/// Model terms resolved against one schema.
struct BoundTerms {
    terms: Vec<(usize, f64, f64, f64)>,
    intercept: f64,
}

impl BoundTerms {
    fn score(&self, values: &[Option<f64>]) -> f64 {
        let z = self.terms.iter().fold(self.intercept, |acc, &(col, w, mean, scale)| {
            acc + w * values[col].map_or(0.0, |v| (v - mean) / scale)
        });
        logistic(z)
    }
}

impl LinearModel {
    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn bind(&self, schema: &FeatureSchema) -> Result<BoundTerms, ModelError> {
        let terms = self
            .weights
            .iter()
            .map(|(name, &w)| {
                let col = schema.value_index(name).ok_or_else(|| ModelError::UnknownFeature(name.clone()))?;
                Ok((col, w, self.feature_means[name], self.feature_scales[name]))
            })
            .collect::<Result<_, ModelError>>()?;
        Ok(BoundTerms { terms, intercept: self.intercept })
    }

    /// Probability of the positive class for one sample.
    pub fn score(&self, schema: &FeatureSchema, sample: &Sample) -> Result<f64, ModelError> {
        Ok(self.bind(schema)?.score(&sample.values))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// One score per row, in row order.
pub fn predict_scores(model: &LinearModel, data: &Dataset) -> Result<ScoreFile, ModelError> {
    let bound = model.bind(data.schema())?;
    let rows = data.rows().iter().map(|r| (r.id.clone(), bound.score(&r.values))).collect();
    ScoreFile::new(model.name.clone(), rows)
}

/// Scores keyed by sample id, from any model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub model_name: String,
    rows: Vec<(String, f64)>,
    index: HashMap<String, usize>,
}

impl ScoreFile {
    pub fn new(model_name: impl Into<String>, rows: Vec<(String, f64)>) -> Result<Self, ModelError> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, (id, score)) in rows.iter().enumerate() {
            if !(0.0..=1.0).contains(score) {
                return Err(ModelError::ScoreRow { row: i + 1, message: format!("score {score} outside [0, 1]") });
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(ModelError::DuplicateScoreId { row: i + 1, id: id.clone() });
            }
        }
        Ok(Self { model_name: model_name.into(), rows, index })
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.index.get(id).map(|&i| self.rows[i].1)
    }

    /// Concatenates score files for the same model; ids must stay unique.
    pub fn concat(model_name: impl Into<String>, parts: &[ScoreFile]) -> Result<Self, ModelError> {
        Self::new(model_name, parts.iter().flat_map(|p| p.rows.iter().cloned()).collect())
    }
}

/// Reads an `id,score` file. Row numbers in errors count data rows from 1.
pub fn read_scores<R: Read>(reader: R, model_name: impl Into<String>) -> Result<ScoreFile, ModelError> {
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["id", "score"] {
        return Err(ModelError::ScoreRow { row: 0, message: "header must be `id,score`".into() });
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let id = record[0].to_string();
        let score: f64 = record[1]
            .parse()
            .map_err(|_| ModelError::ScoreRow { row, message: format!("non-numeric score `{}`", &record[1]) })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(ModelError::ScoreRow { row, message: format!("score {score} outside [0, 1]") });
        }
        if !seen.insert(id.clone()) {
            return Err(ModelError::DuplicateScoreId { row, id });
        }
        rows.push((id, score));
    }
    ScoreFile::new(model_name, rows)
}

/// Loads an external model's score file; the model name defaults to the
/// file stem.
pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ScoreFile, ModelError> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_scores(io::BufReader::new(std::fs::File::open(path)?), name)
}

pub fn write_scores<W: Write>(scores: &ScoreFile, writer: W) -> Result<(), ModelError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["id", "score"])?;
    for (id, score) in scores.rows() {
        csv.write_record([id.as_str(), &score.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Anything that can score individual samples: a trained model, or a
/// score file covering the sample ids.
pub trait Scorer: Sync {
    fn score_sample(&self, schema: &FeatureSchema, sample: &Sample) -> Result<f64, ModelError>;

    /// Features the scorer depends on, when known.
    fn model_features(&self) -> Option<Vec<String>> {
        None
    }
}

impl Scorer for LinearModel {
    fn score_sample(&self, schema: &FeatureSchema, sample: &Sample) -> Result<f64, ModelError> {
        self.score(schema, sample)
    }

    fn model_features(&self) -> Option<Vec<String>> {
        Some(self.weights.keys().cloned().collect())
    }
}

impl Scorer for ScoreFile {
    fn score_sample(&self, _schema: &FeatureSchema, sample: &Sample) -> Result<f64, ModelError> {
        self.get(&sample.id).ok_or_else(|| ModelError::MissingScore(sample.id.clone()))
    }
}
