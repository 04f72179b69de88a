//! AUC ROC, McNemar's test, and the model × test-set report.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dataset::{Dataset, Label};
use crate::model::ScoreFile;

pub const DEFAULT_CLASS_THRESHOLD: f64 = 0.5;
/// Below this many discordant pairs the exact binomial test is used.
pub const EXACT_BELOW: u64 = 25;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("AUC needs both classes; test set `{0}` has only one")]
    SingleClass(String),
    #[error("row `{0}` has no label")]
    Unlabeled(String),
    #[error("score file `{model}` has no score for id `{id}`")]
    MissingScore { model: String, id: String },
    #[error("score coverage gaps: {}", format_gaps(.0))]
    Coverage(Vec<CoverageGap>),
    #[error("no models or no test sets to evaluate")]
    EmptyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageGap {
    pub model: String,
    pub testset: String,
    pub missing: usize,
    pub first_missing_id: String,
}

fn format_gaps(gaps: &[CoverageGap]) -> String {
    gaps.iter()
        .map(|g| format!("{} on {}: {} ids missing (first `{}`)", g.model, g.testset, g.missing, g.first_missing_id))
        .collect::<Vec<_>>()
        .join("; ")
}

/// AUC from `(score, is_positive)` pairs via average ranks; ties count one
/// half. `None` when either class is absent.
pub fn auc_from_pairs(pairs: &[(f64, bool)]) -> Option<f64> {
    let positives = pairs.iter().filter(|p| p.1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pairs[order[end]].0 == pairs[order[start]].0 {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| pairs[i].1).count();
        rank_sum += mean_rank * tied_positives as f64;
        start = end;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

fn aligned_scores(scores: &ScoreFile, labels: &Dataset) -> Result<Vec<(f64, Label)>, EvalError> {
    labels
        .rows()
        .iter()
        .map(|row| {
            let label = row.label.ok_or_else(|| EvalError::Unlabeled(row.id.clone()))?;
            let score = scores.get(&row.id).ok_or_else(|| EvalError::MissingScore {
                model: scores.model_name.clone(),
                id: row.id.clone(),
            })?;
            Ok((score, label))
        })
        .collect()
}

/// AUC of `scores` against the labels of `labels`, aligned by id.
pub fn auc_roc(scores: &ScoreFile, labels: &Dataset) -> Result<f64, EvalError> {
    let pairs: Vec<(f64, bool)> =
        aligned_scores(scores, labels)?.into_iter().map(|(s, l)| (s, l == Label::Positive)).collect();
    auc_from_pairs(&pairs).ok_or_else(|| EvalError::SingleClass(labels.provenance.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarVariant {
    ExactBinomial,
    ChiSquareCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    /// Continuity-corrected chi-square statistic (reported for both variants).
    pub statistic: f64,
    pub p_value: f64,
    pub variant: McNemarVariant,
}

/// Two-sided exact binomial p-value for `k = max(b, c)` successes out of
/// `b + c` fair trials.
pub fn exact_binomial_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.max(c);
    let tail = if n <= 120 { upper_tail_integer(n, k) } else { upper_tail_log(n, k) };
    (2.0 * tail).min(1.0)
}

/// `P(X >= k)` for `X ~ Bin(n, 1/2)` in exact integer arithmetic;
/// C(120, 60) * 120 still fits in a u128.
fn upper_tail_integer(n: u64, k: u64) -> f64 {
    let mut coef: u128 = 1;
    let mut total: u128 = 0;
    for i in 0..=n {
        if i >= k {
            total += coef;
        }
        coef = coef * u128::from(n - i) / u128::from(i + 1);
    }
    total as f64 / 2f64.powi(n as i32)
}

fn upper_tail_log(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_n = ln_gamma(n as f64 + 1.0);
    let ln_half_n = n as f64 * 0.5f64.ln();
    (k..=n)
        .map(|i| (ln_n - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0) + ln_half_n).exp())
        .sum()
}

/// McNemar's test from discordant counts.
pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemar {
    let n = b + c;
    let statistic = if n == 0 {
        0.0
    } else {
        let excess = (b.abs_diff(c) as f64 - 1.0).max(0.0);
        excess * excess / n as f64
    };
    if n < EXACT_BELOW {
        McNemar { b, c, statistic, p_value: exact_binomial_p(b, c), variant: McNemarVariant::ExactBinomial }
    } else {
        let chi = ChiSquared::new(1.0).expect("one degree of freedom");
        McNemar { b, c, statistic, p_value: chi.sf(statistic), variant: McNemarVariant::ChiSquareCorrected }
    }
}

/// Compares two models' thresholded predictions on the labeled rows of
/// `labels`. A score at or above `class_threshold` predicts `+1`.
pub fn mcnemar_test(
    a: &ScoreFile,
    b: &ScoreFile,
    labels: &Dataset,
    class_threshold: f64,
) -> Result<McNemar, EvalError> {
    let left = aligned_scores(a, labels)?;
    let right = aligned_scores(b, labels)?;
    let predict = |score: f64| if score >= class_threshold { Label::Positive } else { Label::Negative };
    let (mut only_a, mut only_b) = (0u64, 0u64);
    for (&(sa, label), &(sb, _)) in left.iter().zip(&right) {
        match (predict(sa) == label, predict(sb) == label) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(only_a, only_b))
}

/// Scores for one table row.
#[derive(Debug, Clone)]
pub struct ModelScores {
    pub name: String,
    /// Trained with similar samples; shown with a star.
    pub augmented: bool,
    pub scores: ScoreFile,
}

impl ModelScores {
    pub fn display_name(&self) -> String {
        if self.augmented {
            format!("{}*", self.name)
        } else {
            self.name.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub name: String,
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetSummary {
    pub name: String,
    pub rows: usize,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub testset: String,
    pub model_a: String,
    pub model_b: String,
    #[serde(flatten)]
    pub test: McNemar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationDelta {
    pub model: String,
    pub testset: String,
    pub plain: f64,
    pub augmented: f64,
    /// `augmented - plain`; no sign is expected.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub class_threshold: f64,
    pub tie_rule: String,
    pub p_values: String,
    pub testsets: Vec<TestSetSummary>,
    /// Free-form run context (thresholds, configuration).
    #[serde(default)]
    pub extra: IndexMap<String, serde_json::Value>,
}

/// AUC per (model, test set) and pairwise McNemar comparisons per test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<ModelRow>,
    pub testsets: Vec<String>,
    /// display name → test set → AUC
    pub cells: IndexMap<String, IndexMap<String, f64>>,
    pub comparisons: Vec<Comparison>,
    pub deltas: Vec<AugmentationDelta>,
    pub metadata: ReportMetadata,
}

/// Fills every table cell and all `C(models, 2)` comparisons per test set.
/// Rows and columns follow input order.
pub fn evaluate_table(
    models: &[ModelScores],
    testsets: &[(String, Dataset)],
    class_threshold: f64,
) -> Result<EvalReport, EvalError> {
    if models.is_empty() || testsets.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let mut gaps = Vec::new();
    for m in models {
        for (name, data) in testsets {
            let missing: Vec<&str> =
                data.rows().iter().filter(|r| m.scores.get(&r.id).is_none()).map(|r| r.id.as_str()).collect();
            if let Some(first) = missing.first() {
                gaps.push(CoverageGap {
                    model: m.display_name(),
                    testset: name.clone(),
                    missing: missing.len(),
                    first_missing_id: first.to_string(),
                });
            }
        }
    }
    if !gaps.is_empty() {
        return Err(EvalError::Coverage(gaps));
    }

    let mut cells: IndexMap<String, IndexMap<String, f64>> = IndexMap::new();
    for m in models {
        let mut row = IndexMap::new();
        for (name, data) in testsets {
            let auc = auc_roc(&m.scores, data).map_err(|e| match e {
                EvalError::SingleClass(_) => EvalError::SingleClass(name.clone()),
                other => other,
            })?;
            row.insert(name.clone(), auc);
        }
        cells.insert(m.display_name(), row);
    }

    let mut comparisons = Vec::new();
    for (name, data) in testsets {
        for (i, a) in models.iter().enumerate() {
            for b in &models[i + 1..] {
                comparisons.push(Comparison {
                    testset: name.clone(),
                    model_a: a.display_name(),
                    model_b: b.display_name(),
                    test: mcnemar_test(&a.scores, &b.scores, data, class_threshold)?,
                });
            }
        }
    }

    let mut deltas = Vec::new();
    for aug in models.iter().filter(|m| m.augmented) {
        let Some(plain) = models.iter().find(|m| !m.augmented && m.name == aug.name) else { continue };
        for (name, _) in testsets {
            let p = cells[&plain.display_name()][name];
            let a = cells[&aug.display_name()][name];
            deltas.push(AugmentationDelta {
                model: aug.name.clone(),
                testset: name.clone(),
                plain: p,
                augmented: a,
                delta: a - p,
            });
        }
    }

    let summaries = testsets
        .iter()
        .map(|(name, data)| {
            let positives = data.rows().iter().filter(|r| r.label == Some(Label::Positive)).count();
            TestSetSummary {
                name: name.clone(),
                rows: data.len(),
                positives,
                negatives: data.labeled_count() - positives,
            }
        })
        .collect();

    Ok(EvalReport {
        models: models.iter().map(|m| ModelRow { name: m.name.clone(), augmented: m.augmented }).collect(),
        testsets: testsets.iter().map(|(n, _)| n.clone()).collect(),
        cells,
        comparisons,
        deltas,
        metadata: ReportMetadata {
            class_threshold,
            tie_rule: "score >= class_threshold predicts +1".into(),
            p_values: format!(
                "raw two-sided p-values, no multiplicity adjustment; exact binomial when b + c < {EXACT_BELOW}, \
                 continuity-corrected chi-square (1 df) otherwise"
            ),
            testsets: summaries,
            extra: IndexMap::new(),
        },
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text rendering: the AUC table (starred rows trained with
    /// similar samples), augmentation deltas, then McNemar comparisons.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = self
            .models
            .iter()
            .map(|m| if m.augmented { format!("{}*", m.name) } else { m.name.clone() })
            .collect();
        let first = names.iter().map(String::len).chain(["Algorithm".len()]).max().unwrap_or(9);
        let widths: Vec<usize> = self.testsets.iter().map(|t| t.len().max(6)).collect();

        out.push_str("Performance of algorithms in AUC ROC\n");
        let _ = write!(out, "{:<first$}", "Algorithm");
        for (t, w) in self.testsets.iter().zip(&widths) {
            let _ = write!(out, "  {t:<w$}");
        }
        out.push('\n');
        let rule = first + widths.iter().map(|w| w + 2).sum::<usize>();
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for name in &names {
            let _ = write!(out, "{name:<first$}");
            for (t, w) in self.testsets.iter().zip(&widths) {
                let _ = write!(out, "  {:<w$.4}", self.cells[name][t]);
            }
            out.push('\n');
        }
        out.push_str("* trained with similar samples\n");

        if !self.deltas.is_empty() {
            out.push_str("\nAugmented minus plain AUC\n");
            for d in &self.deltas {
                let _ = writeln!(
                    out,
                    "  {} on {}: {:.4} -> {:.4} ({:+.4})",
                    d.model, d.testset, d.plain, d.augmented, d.delta
                );
            }
        }

        if !self.comparisons.is_empty() {
            let _ = writeln!(
                out,
                "\nMcNemar tests (class threshold {}, {})",
                self.metadata.class_threshold, self.metadata.p_values
            );
            for c in &self.comparisons {
                let variant = match c.test.variant {
                    McNemarVariant::ExactBinomial => "exact",
                    McNemarVariant::ChiSquareCorrected => "chi2",
                };
                let _ = writeln!(
                    out,
                    "  [{}] {} vs {}: b={} c={} stat={:.4} p={:.4} ({variant})",
                    c.testset, c.model_a, c.model_b, c.test.b, c.test.c, c.test.statistic, c.test.p_value
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnSpec, FeatureSchema, Role, Sample};
    use chrono::NaiveDateTime;

    fn labels(signs: &[i64]) -> Dataset {
        let schema = FeatureSchema::new(vec![
            ColumnSpec { name: "id".into(), role: Role::Id },
            ColumnSpec { name: "ts".into(), role: Role::Timestamp },
            ColumnSpec { name: "y".into(), role: Role::Label },
            ColumnSpec { name: "x".into(), role: Role::Similarity },
        ])
        .unwrap();
        let rows = signs
            .iter()
            .enumerate()
            .map(|(i, &s)| Sample {
                id: format!("r{i}"),
                timestamp: NaiveDateTime::default(),
                values: vec![Some(0.0)],
                label: Label::from_sign(s),
                origin: None,
            })
            .collect();
        Dataset::new(schema, rows, "labels").unwrap()
    }

    fn scores(name: &str, values: &[f64]) -> ScoreFile {
        ScoreFile::new(name, values.iter().enumerate().map(|(i, &s)| (format!("r{i}"), s)).collect()).unwrap()
    }

    #[test]
    fn separated_scores_give_one() {
        let auc = auc_roc(&scores("m", &[0.9, 0.8, 0.2, 0.1]), &labels(&[1, 1, -1, -1])).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn identical_scores_give_one_half() {
        let auc = auc_roc(&scores("m", &[0.3; 6]), &labels(&[1, -1, 1, -1, -1, 1])).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn four_sample_fixture() {
        let auc = auc_roc(&scores("m", &[0.9, 0.8, 0.4, 0.2]), &labels(&[1, -1, 1, -1])).unwrap();
        assert_eq!(auc, 0.75);
    }

    #[test]
    fn single_class_and_missing_ids_are_errors() {
        assert!(matches!(auc_roc(&scores("m", &[0.1, 0.2]), &labels(&[1, 1])), Err(EvalError::SingleClass(_))));
        let err = auc_roc(&scores("m", &[0.1]), &labels(&[1, -1])).unwrap_err();
        assert!(matches!(err, EvalError::MissingScore { ref id, .. } if id == "r1"));
    }

    #[test]
    fn mcnemar_hand_values() {
        let none = mcnemar_from_counts(0, 0);
        assert_eq!((none.p_value, none.variant), (1.0, McNemarVariant::ExactBinomial));
        let m = mcnemar_from_counts(5, 0);
        assert_eq!(m.p_value, 0.0625);
        let m = mcnemar_from_counts(6, 2);
        assert_eq!(m.p_value, 74.0 / 256.0);
        assert!((m.p_value - 0.2891).abs() < 1e-4);
        assert_eq!(m.statistic, 1.125);
    }

    #[test]
    fn mcnemar_switches_at_twenty_five() {
        assert_eq!(mcnemar_from_counts(20, 4).variant, McNemarVariant::ExactBinomial);
        let chi = mcnemar_from_counts(20, 5);
        assert_eq!(chi.variant, McNemarVariant::ChiSquareCorrected);
        assert_eq!(chi.statistic, 14.0 * 14.0 / 25.0);
        // P(chi2_1 > x) = erfc(sqrt(x / 2))
        let expected = statrs::function::erf::erfc((chi.statistic / 2.0).sqrt());
        assert!((chi.p_value - expected).abs() < 1e-12);
    }

    #[test]
    fn binomial_tail_paths_agree() {
        for (n, k) in [(30, 18), (100, 60), (120, 70), (120, 61)] {
            let exact = upper_tail_integer(n, k);
            let logs = upper_tail_log(n, k);
            assert!((exact - logs).abs() <= 1e-10 * exact, "n={n} k={k}: {exact} vs {logs}");
        }
        assert_eq!(exact_binomial_p(3, 3), 1.0);
    }

    #[test]
    fn mcnemar_from_scores() {
        let truth = labels(&[1, 1, -1, -1, 1]);
        let a = scores("a", &[0.9, 0.7, 0.2, 0.6, 0.5]);
        let b = scores("b", &[0.1, 0.8, 0.3, 0.1, 0.4]);
        // a correct on r0, r1, r2, r4 (0.5 ties to +1); b correct on r1, r2, r3
        let m = mcnemar_test(&a, &b, &truth, 0.5).unwrap();
        assert_eq!((m.b, m.c), (2, 1));
        let swapped = mcnemar_test(&b, &a, &truth, 0.5).unwrap();
        assert_eq!((swapped.b, swapped.c), (1, 2));
        assert_eq!(swapped.p_value, m.p_value);
    }

    #[test]
    fn table_shapes() {
        let truth = labels(&[1, -1, 1, -1]);
        let one = vec![ModelScores { name: "m".into(), augmented: false, scores: scores("m", &[0.9, 0.1, 0.6, 0.4]) }];
        let report = evaluate_table(&one, &[("real".into(), truth.clone())], 0.5).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert!(report.comparisons.is_empty());

        let models: Vec<ModelScores> = (0..6)
            .map(|i| ModelScores {
                name: format!("m{}", i / 2),
                augmented: i % 2 == 1,
                scores: scores("x", &[0.9 - i as f64 * 0.1, 0.2, 0.5, 0.3]),
            })
            .collect();
        let sets = vec![("real".to_string(), truth.clone()), ("similar".to_string(), truth)];
        let report = evaluate_table(&models, &sets, 0.5).unwrap();
        assert_eq!(report.cells.values().map(|r| r.len()).sum::<usize>(), 12);
        assert_eq!(report.comparisons.len(), 30);
        assert_eq!(report.comparisons.iter().filter(|c| c.testset == "real").count(), 15);
        assert_eq!(report.cells.keys().collect::<Vec<_>>(), ["m0", "m0*", "m1", "m1*", "m2", "m2*"]);
        assert_eq!(report.deltas.len(), 6);
        let text = report.to_text();
        assert!(text.contains("m1*"));
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn coverage_gaps_are_listed() {
        let truth = labels(&[1, -1, 1]);
        let models = vec![
            ModelScores { name: "a".into(), augmented: false, scores: scores("a", &[0.1, 0.2]) },
            ModelScores { name: "b".into(), augmented: false, scores: scores("b", &[0.1]) },
        ];
        let err = evaluate_table(&models, &[("real".into(), truth)], 0.5).unwrap_err();
        let EvalError::Coverage(gaps) = err else { panic!("expected coverage error") };
        assert_eq!(gaps.len(), 2);
        assert_eq!((gaps[1].missing, gaps[1].first_missing_id.as_str()), (2, "r1"));
    }
}
