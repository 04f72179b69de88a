//! Local interpretability probes for a trained scorer.
//!
//! * [`probability_grid`] sweeps two features over a grid with every other
//!   feature held at a base sample's values.
//! * [`similarity_shell`] draws perturbations of selected similarity
//!   features that stay within kernel similarity `d` of the base sample.
//! * [`recourse_probe`] scans a shell for samples whose predicted class
//!   differs from the base sample's, and reports the most similar one.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{format_value, Dataset, DatasetError, FeatureSchema, Role, Sample};
use crate::kernel::{GowerKernel, KernelError, RangeTable};
use crate::model::{ModelError, Scorer};
use crate::util::par_map;

/// Redraws allowed per shell sample before giving up.
pub const MAX_SHELL_ATTEMPTS: usize = 1000;
/// The divergence budget is shrunk by this relative amount so that rounding
/// in the kernel cannot push a draw at exactly `d` below it.
const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("feature `{0}` is not a value feature of the schema")]
    UnknownFeature(String),
    #[error("feature `{0}` is not used by the model")]
    FeatureNotInModel(String),
    #[error("feature `{0}` is not a similarity feature")]
    NotSimilarityFeature(String),
    #[error("base sample `{id}` is missing feature `{feature}`")]
    BaseMissing { id: String, feature: String },
    #[error("axis for `{feature}` is invalid: {reason}")]
    InvalidAxis { feature: String, reason: String },
    #[error("no features to vary")]
    EmptyVary,
    #[error("shell is empty")]
    EmptyShell,
    #[error("similarity threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("shell sample {index}: no draw within similarity {d} after {attempts} attempts")]
    ShellExhausted { index: usize, d: f64, attempts: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    /// Evenly spaced ascending values; the endpoints are exact.
    pub fn values(&self, feature: &str) -> Result<Vec<f64>, ProbeError> {
        let invalid = |reason: &str| ProbeError::InvalidAxis { feature: feature.into(), reason: reason.into() };
        if self.count == 0 {
            return Err(invalid("count must be at least 1"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(invalid("need finite min <= max"));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let last = self.count - 1;
        let step = (self.max - self.min) / last as f64;
        Ok((0..self.count).map(|i| if i == last { self.max } else { self.min + step * i as f64 }).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub sample_id: String,
    pub feature_x: String,
    pub feature_y: String,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `probabilities[i][j]` is the score at `(x_values[i], y_values[j])`.
    pub probabilities: Vec<Vec<f64>>,
}

fn require_value_feature(schema: &FeatureSchema, name: &str) -> Result<usize, ProbeError> {
    schema.value_index(name).ok_or_else(|| ProbeError::UnknownFeature(name.to_string()))
}

/// Copies of `base` over the grid, row-major in x, with ids
/// `<base>#grid-<i>-<j>`. Score these with any model to build a grid from a
/// score file.
pub fn grid_points(
    schema: &FeatureSchema,
    base: &Sample,
    feature_x: &str,
    feature_y: &str,
    spec: &GridSpec,
) -> Result<Dataset, ProbeError> {
    let cx = require_value_feature(schema, feature_x)?;
    let cy = require_value_feature(schema, feature_y)?;
    let xs = spec.x.values(feature_x)?;
    let ys = spec.y.values(feature_y)?;
    let mut rows = Vec::with_capacity(xs.len() * ys.len());
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let mut values = base.values.clone();
            values[cx] = Some(x);
            values[cy] = Some(y);
            rows.push(Sample {
                id: format!("{}#grid-{i}-{j}", base.id),
                timestamp: base.timestamp,
                values,
                label: None,
                origin: None,
            });
        }
    }
    Ok(Dataset::new(schema.clone(), rows, format!("probability grid around {}", base.id))?)
}

fn check_model_features(
    scorer: &dyn Scorer,
    base: &Sample,
    schema: &FeatureSchema,
    swept: &[&str],
) -> Result<(), ProbeError> {
    let Some(features) = scorer.model_features() else { return Ok(()) };
    for f in swept {
        if !features.iter().any(|m| m == f) {
            return Err(ProbeError::FeatureNotInModel(f.to_string()));
        }
    }
    for f in &features {
        if swept.contains(&f.as_str()) {
            continue;
        }
        if base.value(schema, f).is_none() {
            return Err(ProbeError::BaseMissing { id: base.id.clone(), feature: f.clone() });
        }
    }
    Ok(())
}

/// Scores the model on a two-feature grid around `base`.
pub fn probability_grid(
    scorer: &dyn Scorer,
    schema: &FeatureSchema,
    base: &Sample,
    feature_x: &str,
    feature_y: &str,
    spec: &GridSpec,
    workers: usize,
) -> Result<ProbeGrid, ProbeError> {
    let points = grid_points(schema, base, feature_x, feature_y, spec)?;
    check_model_features(scorer, base, schema, &[feature_x, feature_y])?;
    let scores = par_map(points.rows(), workers, |_, s| scorer.score_sample(schema, s))
        .into_iter()
        .collect::<Result<Vec<f64>, _>>()?;
    let x_values = spec.x.values(feature_x)?;
    let y_values = spec.y.values(feature_y)?;
    let probabilities = scores.chunks(y_values.len()).map(<[f64]>::to_vec).collect();
    Ok(ProbeGrid {
        sample_id: base.id.clone(),
        feature_x: feature_x.to_string(),
        feature_y: feature_y.to_string(),
        x_values,
        y_values,
        probabilities,
    })
}

/// Long format: `sample_id,<feature_x>,<feature_y>,score`.
pub fn write_grid<W: Write>(grid: &ProbeGrid, writer: W) -> Result<(), ProbeError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["sample_id", grid.feature_x.as_str(), grid.feature_y.as_str(), "score"])?;
    for (x, row) in grid.x_values.iter().zip(&grid.probabilities) {
        for (y, p) in grid.y_values.iter().zip(row) {
            csv.write_record([grid.sample_id.clone(), x.to_string(), y.to_string(), p.to_string()])?;
        }
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// A perturbed copy of the base sample within the similarity shell.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellSample {
    pub sample: Sample,
    /// Kernel similarity to the base sample (always `>= d`).
    pub similarity: f64,
}

/// Draws `n` perturbations of the `vary` features of `base`.
///
/// A divergence budget `D * (1 - d)` (`D` = similarity features present in
/// `base`) is split over the varied features with uniform simplex weights;
/// each feature moves by its share of the budget times its range, in a
/// random direction, and is clamped to the observed bounds. Draws that fail
/// the kernel check `k(base, draw) >= d` are redrawn. Sample `i` uses its
/// own ChaCha stream, so results do not depend on `workers`.
#[allow(clippy::too_many_arguments)]
pub fn similarity_shell(
    schema: &FeatureSchema,
    base: &Sample,
    vary: &[String],
    ranges: &RangeTable,
    d: f64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<ShellSample>, ProbeError> {
    if vary.is_empty() {
        return Err(ProbeError::EmptyVary);
    }
    if !(0.0..=1.0).contains(&d) {
        return Err(ProbeError::InvalidThreshold(d));
    }
    let kernel = GowerKernel::new(schema, ranges)?;
    let mut moves = Vec::with_capacity(vary.len());
    for name in vary {
        let col = require_value_feature(schema, name)?;
        if schema.role_of(name) != Some(Role::Similarity) {
            return Err(ProbeError::NotSimilarityFeature(name.clone()));
        }
        let value = base.values[col]
            .ok_or_else(|| ProbeError::BaseMissing { id: base.id.clone(), feature: name.clone() })?;
        let range = ranges.range(name).expect("validated by kernel");
        let bounds = ranges.bounds(name);
        moves.push((col, value, range, bounds));
    }
    let present = schema.similarity_indices().iter().filter(|&&c| base.values[c].is_some()).count();
    let budget = present as f64 * (1.0 - d) * (1.0 - BUDGET_SLACK);

    let indices: Vec<usize> = (0..n).collect();
    par_map(&indices, workers, |_, &index| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        for _ in 0..MAX_SHELL_ATTEMPTS {
            let weights: Vec<f64> = moves.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = weights.iter().sum();
            let mut values = base.values.clone();
            for (&(col, value, range, bounds), w) in moves.iter().zip(&weights) {
                let share = if total > 0.0 { w / total } else { 1.0 / moves.len() as f64 };
                let magnitude = (share * budget).min(1.0) * range;
                let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut moved = value + direction * magnitude;
                if let Some((lo, hi)) = bounds {
                    moved = moved.clamp(lo.min(value), hi.max(value)).clamp(lo, hi);
                }
                values[col] = Some(moved);
            }
            let similarity = kernel.similarity_values(&base.values, &values)?;
            if similarity >= d {
                let sample = Sample {
                    id: format!("{}#shell-{index}", base.id),
                    timestamp: base.timestamp,
                    values,
                    label: None,
                    origin: None,
                };
                return Ok(ShellSample { sample, similarity });
            }
        }
        Err(ProbeError::ShellExhausted { index, d, attempts: MAX_SHELL_ATTEMPTS })
    })
    .into_iter()
    .collect()
}

/// Shell samples as an unlabeled dataset, for scoring by external models.
pub fn shell_dataset(schema: &FeatureSchema, base: &Sample, shell: &[ShellSample]) -> Result<Dataset, ProbeError> {
    Ok(Dataset::new(
        schema.clone(),
        shell.iter().map(|s| s.sample.clone()).collect(),
        format!("similarity shell around {}", base.id),
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredShellSample {
    pub shell: ShellSample,
    pub score: f64,
    /// Predicted class differs from the base sample's.
    pub crossed: bool,
}

fn positive(score: f64, threshold: f64) -> bool {
    score >= threshold
}

/// Scores the base sample and every shell sample.
pub fn score_shell(
    scorer: &dyn Scorer,
    schema: &FeatureSchema,
    base: &Sample,
    shell: &[ShellSample],
    class_threshold: f64,
    workers: usize,
) -> Result<(f64, Vec<ScoredShellSample>), ProbeError> {
    let base_score = scorer.score_sample(schema, base)?;
    let base_class = positive(base_score, class_threshold);
    let scored = par_map(shell, workers, |_, s| {
        scorer.score_sample(schema, &s.sample).map(|score| ScoredShellSample {
            shell: s.clone(),
            score,
            crossed: positive(score, class_threshold) != base_class,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok((base_score, scored))
}

/// Long format: `id,<varied features>,similarity,score,crossed`.
pub fn write_shell<W: Write>(
    schema: &FeatureSchema,
    vary: &[String],
    scored: &[ScoredShellSample],
    writer: W,
) -> Result<(), ProbeError> {
    let columns = vary.iter().map(|v| require_value_feature(schema, v)).collect::<Result<Vec<_>, _>>()?;
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["id"];
    header.extend(vary.iter().map(String::as_str));
    header.extend(["similarity", "score", "crossed"]);
    csv.write_record(&header)?;
    for s in scored {
        let mut record = vec![s.shell.sample.id.clone()];
        record.extend(columns.iter().map(|&c| format_value(s.shell.sample.values[c])));
        record.extend([s.shell.similarity.to_string(), s.score.to_string(), s.crossed.to_string()]);
        csv.write_record(&record)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub feature: String,
    pub from: f64,
    pub to: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseCandidate {
    pub id: String,
    pub similarity: f64,
    /// `1 - similarity`.
    pub cost: f64,
    pub score: f64,
    pub changes: Vec<FeatureDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseReport {
    pub base_id: String,
    pub base_score: f64,
    /// +1 or -1; a score at the threshold counts as +1.
    pub base_class: i8,
    pub class_threshold: f64,
    pub shell_size: usize,
    pub crossings: usize,
    pub recourse_found: bool,
    pub best: Option<RecourseCandidate>,
    /// Largest `|score - base_score| / (1 - similarity)` over the shell.
    pub max_score_change_per_dissimilarity: Option<f64>,
    pub message: String,
}

/// Looks for shell samples on the other side of the decision threshold and
/// reports the most similar one (ties broken by id) with its feature changes.
pub fn recourse_probe(
    scorer: &dyn Scorer,
    schema: &FeatureSchema,
    base: &Sample,
    shell: &[ShellSample],
    class_threshold: f64,
    workers: usize,
) -> Result<RecourseReport, ProbeError> {
    if shell.is_empty() {
        return Err(ProbeError::EmptyShell);
    }
    let (base_score, scored) = score_shell(scorer, schema, base, shell, class_threshold, workers)?;
    let crossings: Vec<&ScoredShellSample> = scored.iter().filter(|s| s.crossed).collect();
    let best = crossings
        .iter()
        .copied()
        .max_by(|a, b| {
            a.shell
                .similarity
                .total_cmp(&b.shell.similarity)
                .then_with(|| b.shell.sample.id.cmp(&a.shell.sample.id))
        })
        .map(|s| RecourseCandidate {
            id: s.shell.sample.id.clone(),
            similarity: s.shell.similarity,
            cost: 1.0 - s.shell.similarity,
            score: s.score,
            changes: schema
                .value_features()
                .iter()
                .zip(base.values.iter().zip(&s.shell.sample.values))
                .filter_map(|(name, pair)| match pair {
                    (Some(from), Some(to)) if from != to => Some(FeatureDelta {
                        feature: name.clone(),
                        from: *from,
                        to: *to,
                        delta: to - from,
                    }),
                    _ => None,
                })
                .collect(),
        });
    let max_change = scored
        .iter()
        .filter(|s| s.shell.similarity < 1.0)
        .map(|s| (s.score - base_score).abs() / (1.0 - s.shell.similarity))
        .max_by(f64::total_cmp);
    let min_similarity = scored.iter().map(|s| s.shell.similarity).fold(f64::INFINITY, f64::min);
    let message = match &best {
        Some(b) => format!("recourse found: `{}` crosses the threshold at similarity {:.4}", b.id, b.similarity),
        None => format!("no recourse found within similarity {min_similarity:.4}"),
    };
    Ok(RecourseReport {
        base_id: base.id.clone(),
        base_score,
        base_class: if positive(base_score, class_threshold) { 1 } else { -1 },
        class_threshold,
        shell_size: scored.len(),
        crossings: crossings.len(),
        recourse_found: best.is_some(),
        best,
        max_score_change_per_dissimilarity: max_change,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnSpec;
    use crate::model::{LinearModel, Regularization, StopReason};
    use chrono::NaiveDateTime;
    use indexmap::IndexMap;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec { name: "id".into(), role: Role::Id },
            ColumnSpec { name: "ts".into(), role: Role::Timestamp },
            ColumnSpec { name: "y".into(), role: Role::Label },
            ColumnSpec { name: "a".into(), role: Role::Similarity },
            ColumnSpec { name: "b".into(), role: Role::Similarity },
            ColumnSpec { name: "c".into(), role: Role::Similarity },
            ColumnSpec { name: "e".into(), role: Role::EstimationOnly },
        ])
        .unwrap()
    }

    fn base() -> Sample {
        Sample {
            id: "base".into(),
            timestamp: NaiveDateTime::default(),
            values: vec![Some(0.5), Some(2.0), Some(-1.0), Some(3.0)],
            label: None,
            origin: None,
        }
    }

    fn ranges() -> RangeTable {
        RangeTable {
            ranges: IndexMap::from([("a".into(), 1.0), ("b".into(), 4.0), ("c".into(), 2.0)]),
            bounds: IndexMap::from([("a".into(), [0.0, 1.0]), ("b".into(), [0.0, 4.0]), ("c".into(), [-2.0, 0.0])]),
            source: "unit".into(),
        }
    }

    fn linear(weights: &[(&str, f64)], intercept: f64) -> LinearModel {
        LinearModel {
            name: "lin".into(),
            weights: weights.iter().map(|(n, w)| (n.to_string(), *w)).collect(),
            intercept,
            feature_means: weights.iter().map(|(n, _)| (n.to_string(), 0.0)).collect(),
            feature_scales: weights.iter().map(|(n, _)| (n.to_string(), 1.0)).collect(),
            regularization: Regularization { l1: 0.0, l2: 0.0 },
            max_iter: 0,
            tol: 1e-6,
            seed: 0,
            stop_reason: StopReason::IterationBudget,
            iterations: 0,
            objective: 0.0,
            dropped_features: Vec::new(),
        }
    }

    fn spec(nx: usize, ny: usize) -> GridSpec {
        GridSpec { x: AxisSpec { min: 0.0, max: 1.0, count: nx }, y: AxisSpec { min: 0.0, max: 4.0, count: ny } }
    }

    #[test]
    fn flat_model_gives_flat_grid() {
        let model = linear(&[("a", 0.0), ("b", 0.0)], 0.0);
        let grid = probability_grid(&model, &schema(), &base(), "a", "b", &spec(4, 5), 2).unwrap();
        assert!(grid.probabilities.iter().flatten().all(|&p| p == 0.5));
    }

    #[test]
    fn grid_shape_matches_axes() {
        let model = linear(&[("a", 1.0), ("b", -0.5)], 0.1);
        let grid = probability_grid(&model, &schema(), &base(), "a", "b", &spec(20, 30), 3).unwrap();
        assert_eq!(grid.probabilities.len(), 20);
        assert!(grid.probabilities.iter().all(|r| r.len() == 30));
        assert_eq!(grid.x_values.first(), Some(&0.0));
        assert_eq!(grid.x_values.last(), Some(&1.0));
    }

    #[test]
    fn grid_cells_match_hand_logistic() {
        let model = linear(&[("a", 1.0), ("b", -0.5), ("c", 2.0)], 0.1);
        let grid = probability_grid(&model, &schema(), &base(), "a", "b", &spec(3, 5), 1).unwrap();
        // x in {0, .5, 1}, y in {0, 1, 2, 3, 4}; c held at -1
        for (i, j) in [(0, 0), (1, 3), (2, 4)] {
            let (x, y) = (grid.x_values[i], grid.y_values[j]);
            let z: f64 = 0.1 + x - 0.5 * y - 2.0;
            let expected = 1.0 / (1.0 + (-z).exp());
            assert!((grid.probabilities[i][j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_rejects_features_outside_model() {
        let model = linear(&[("a", 1.0)], 0.0);
        let err = probability_grid(&model, &schema(), &base(), "a", "b", &spec(2, 2), 1).unwrap_err();
        assert!(matches!(err, ProbeError::FeatureNotInModel(ref f) if f == "b"));
        let err = probability_grid(&model, &schema(), &base(), "a", "zz", &spec(2, 2), 1).unwrap_err();
        assert!(matches!(err, ProbeError::UnknownFeature(_)));
    }

    #[test]
    fn shell_at_full_similarity_is_the_base() {
        let shell = similarity_shell(&schema(), &base(), &["a".into(), "b".into()], &ranges(), 1.0, 5, 7, 1).unwrap();
        assert_eq!(shell.len(), 5);
        assert!(shell.iter().all(|s| s.sample.values == base().values && s.similarity == 1.0));
    }

    #[test]
    fn shell_respects_similarity_and_is_seeded() {
        let vary: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let kernel = GowerKernel::new(&schema(), &ranges()).unwrap();
        let shell = similarity_shell(&schema(), &base(), &vary, &ranges(), 0.8, 200, 11, 4).unwrap();
        for s in &shell {
            assert!(kernel.similarity(&base(), &s.sample).unwrap().value() >= 0.8);
            assert_eq!(s.sample.values[3], Some(3.0), "estimation-only feature untouched");
        }
        let again = similarity_shell(&schema(), &base(), &vary, &ranges(), 0.8, 200, 11, 1).unwrap();
        assert_eq!(shell, again);
        let other = similarity_shell(&schema(), &base(), &vary, &ranges(), 0.8, 200, 12, 1).unwrap();
        assert_ne!(shell, other);
    }

    #[test]
    fn shell_rejects_bad_vary_sets() {
        let err = similarity_shell(&schema(), &base(), &[], &ranges(), 0.9, 3, 0, 1).unwrap_err();
        assert!(matches!(err, ProbeError::EmptyVary));
        let err = similarity_shell(&schema(), &base(), &["e".into()], &ranges(), 0.9, 3, 0, 1).unwrap_err();
        assert!(matches!(err, ProbeError::NotSimilarityFeature(_)));
    }

    #[test]
    fn flat_model_has_no_recourse() {
        let shell = similarity_shell(&schema(), &base(), &["a".into(), "b".into()], &ranges(), 0.7, 50, 3, 2).unwrap();
        let report = recourse_probe(&linear(&[("a", 0.0)], -1.0), &schema(), &base(), &shell, 0.5, 2).unwrap();
        assert!(!report.recourse_found);
        assert_eq!(report.crossings, 0);
        assert!(report.message.starts_with("no recourse found"));
    }

    #[test]
    fn base_at_threshold_counts_as_positive() {
        let shell = similarity_shell(&schema(), &base(), &["a".into()], &ranges(), 0.8, 40, 5, 1).unwrap();
        // z = a - 0.5 is zero at the base
        let model = linear(&[("a", 1.0)], -0.5);
        let report = recourse_probe(&model, &schema(), &base(), &shell, 0.5, 1).unwrap();
        assert_eq!(report.base_score, 0.5);
        assert_eq!(report.base_class, 1);
        let best = report.best.unwrap();
        assert!(best.score < 0.5);
        assert!(best.changes.iter().all(|c| c.feature == "a" && c.delta < 0.0));
    }

    #[test]
    fn recourse_ignores_shell_order() {
        let vary: Vec<String> = vec!["a".into(), "b".into()];
        let shell = similarity_shell(&schema(), &base(), &vary, &ranges(), 0.6, 100, 9, 1).unwrap();
        let model = linear(&[("a", 3.0), ("b", 0.5)], -2.0);
        let forward = recourse_probe(&model, &schema(), &base(), &shell, 0.5, 1).unwrap();
        let mut reversed = shell.clone();
        reversed.reverse();
        let backward = recourse_probe(&model, &schema(), &base(), &reversed, 0.5, 3).unwrap();
        assert_eq!(forward, backward);
        assert!(forward.recourse_found);
    }
}
