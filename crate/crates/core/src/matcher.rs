//! Confident label estimation for unlabeled samples.
//!
//! Every labeled sample whose kernel similarity to an unlabeled sample
//! exceeds `d` votes with its label, weighted by that similarity. The vote
//! `t` is the weighted mean label; the sample gets a label only when
//! `|t| > c`, and then also receives a similarity-weighted estimate of the
//! estimation-only features from the same contributors.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{format_value, Dataset, FeatureSchema, Label, Sample};
use crate::kernel::{GowerKernel, KernelError};
use crate::util::{nearest_rank, par_map};

/// Maximum number of contributors kept per result.
pub const TOP_CONTRIBUTORS: usize = 10;
pub const DEFAULT_PERCENTILE: f64 = 0.95;
pub const DEFAULT_CONFIDENCE_BUDGET: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfUnitRange { name: &'static str, value: f64 },
    #[error("need at least 2 labeled rows to calibrate, found {0}")]
    TooFewLabeled(usize),
    #[error("unlabeled dataset is empty")]
    EmptyUnlabeled,
    #[error("reference row `{0}` has no label")]
    UnlabeledReference(String),
    #[error("row `{id}`: {source}")]
    Row { id: String, source: KernelError },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("match file row {row}: {message}")]
    Parse { row: usize, message: String },
}

fn unit(name: &'static str, value: f64) -> Result<f64, MatchError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(MatchError::OutOfUnitRange { name, value })
    }
}

/// Similarity threshold `d`, confidence threshold `c`, and how they were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub d: f64,
    pub c: f64,
    pub provenance: String,
}

impl SimilarityParams {
    pub fn new(d: f64, c: f64, provenance: impl Into<String>) -> Result<Self, MatchError> {
        Ok(Self { d: unit("d", d)?, c: unit("c", c)?, provenance: provenance.into() })
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        unit("d", self.d)?;
        unit("c", self.c)?;
        Ok(())
    }
}

/// Pseudo-label: `Abstain` when the vote is undefined or not confident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimate {
    Negative,
    Abstain,
    Positive,
}

impl Estimate {
    pub fn from_vote(vote: Option<f64>, c: f64) -> Self {
        match vote {
            Some(t) if t > c => Estimate::Positive,
            Some(t) if t < -c => Estimate::Negative,
            _ => Estimate::Abstain,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Estimate::Negative => -1,
            Estimate::Abstain => 0,
            Estimate::Positive => 1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            -1 => Some(Estimate::Negative),
            0 => Some(Estimate::Abstain),
            1 => Some(Estimate::Positive),
            _ => None,
        }
    }

    pub fn label(self) -> Option<Label> {
        match self {
            Estimate::Negative => Some(Label::Negative),
            Estimate::Abstain => None,
            Estimate::Positive => Some(Label::Positive),
        }
    }

    pub fn is_confident(self) -> bool {
        self != Estimate::Abstain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contributor {
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub unlabeled_id: String,
    /// Weighted vote `t`; `None` when no labeled sample exceeds `d`.
    pub vote: Option<f64>,
    pub estimate: Estimate,
    /// Imputed estimation-only features in schema order; `Some` iff confident.
    pub imputed: Option<Vec<Option<f64>>>,
    pub matched_count: usize,
    /// Highest-similarity contributors, at most [`TOP_CONTRIBUTORS`].
    pub top_contributors: Vec<Contributor>,
}

fn ensure_labeled(labeled: &Dataset) -> Result<(), MatchError> {
    match labeled.rows().iter().find(|r| r.label.is_none()) {
        Some(row) => Err(MatchError::UnlabeledReference(row.id.clone())),
        None => Ok(()),
    }
}

fn estimate_unchecked(
    u: &Sample,
    labeled: &Dataset,
    kernel: &GowerKernel,
    params: &SimilarityParams,
) -> Result<MatchResult, KernelError> {
    let mut matched: Vec<(usize, f64)> = Vec::new();
    let mut weight_sum = 0.0;
    let mut vote_sum = 0.0;
    for (i, row) in labeled.rows().iter().enumerate() {
        let k = kernel.similarity_values(&row.values, &u.values)?;
        if k > params.d {
            let y = row.label.expect("reference rows are labeled").value();
            weight_sum += k;
            vote_sum += k * y;
            matched.push((i, k));
        }
    }
    let vote = (weight_sum > 0.0).then(|| vote_sum / weight_sum);
    let estimate = Estimate::from_vote(vote, params.c);
    let imputed = estimate.is_confident().then(|| {
        labeled
            .schema()
            .estimation_indices()
            .iter()
            .map(|&col| {
                let mut num = 0.0;
                let mut den = 0.0;
                for &(i, w) in &matched {
                    if let Some(x) = labeled.rows()[i].values[col] {
                        num += w * x;
                        den += w;
                    }
                }
                (den > 0.0).then(|| num / den)
            })
            .collect()
    });
    let matched_count = matched.len();
    matched.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top_contributors = matched
        .iter()
        .take(TOP_CONTRIBUTORS)
        .map(|&(i, similarity)| Contributor { id: labeled.rows()[i].id.clone(), similarity })
        .collect();
    Ok(MatchResult {
        unlabeled_id: u.id.clone(),
        vote,
        estimate,
        imputed,
        matched_count,
        top_contributors,
    })
}

/// Weighted vote, pseudo-label and feature imputation for one unlabeled sample.
///
/// An unmatched sample is a valid result with an undefined vote and
/// `Estimate::Abstain`.
pub fn estimate_label(
    u: &Sample,
    labeled: &Dataset,
    kernel: &GowerKernel,
    params: &SimilarityParams,
) -> Result<MatchResult, MatchError> {
    params.validate()?;
    ensure_labeled(labeled)?;
    estimate_unchecked(u, labeled, kernel, params)
        .map_err(|source| MatchError::Row { id: u.id.clone(), source })
}

/// [`estimate_label`] over every unlabeled row, in row order.
///
/// Rows are independent, so the output does not depend on `workers`. The
/// first failing row (in row order) is reported.
pub fn match_batch(
    unlabeled: &Dataset,
    labeled: &Dataset,
    kernel: &GowerKernel,
    params: &SimilarityParams,
    workers: usize,
) -> Result<Vec<MatchResult>, MatchError> {
    params.validate()?;
    ensure_labeled(labeled)?;
    par_map(unlabeled.rows(), workers, |_, u| {
        estimate_unchecked(u, labeled, kernel, params)
            .map_err(|source| MatchError::Row { id: u.id.clone(), source })
    })
    .into_iter()
    .collect()
}

/// All `N(N-1)/2` kernel values between labeled rows, sorted ascending.
pub fn pairwise_similarities(
    labeled: &Dataset,
    kernel: &GowerKernel,
    workers: usize,
) -> Result<Vec<f64>, MatchError> {
    let rows = labeled.rows();
    let per_row = par_map(rows, workers, |i, a| {
        rows[i + 1..]
            .iter()
            .map(|b| kernel.similarity_values(&a.values, &b.values))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|source| MatchError::Row { id: a.id.clone(), source })
    });
    let mut scores = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for chunk in per_row {
        scores.extend(chunk?);
    }
    scores.sort_by(f64::total_cmp);
    Ok(scores)
}

/// `d` as the nearest-rank `percentile` of labeled pairwise similarities.
pub fn calibrate_similarity_threshold(
    labeled: &Dataset,
    kernel: &GowerKernel,
    percentile: f64,
    workers: usize,
) -> Result<f64, MatchError> {
    unit("percentile", percentile)?;
    if labeled.len() < 2 {
        return Err(MatchError::TooFewLabeled(labeled.len()));
    }
    let scores = pairwise_similarities(labeled, kernel, workers)?;
    Ok(nearest_rank(&scores, percentile).expect("at least one pair"))
}

/// Distribution of labeled pairwise similarities, reported alongside the
/// calibrated thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub pairs: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

impl SimilaritySummary {
    /// Summary of an ascending list; `None` when empty.
    pub fn from_sorted(sorted: &[f64]) -> Option<Self> {
        let q = |p| nearest_rank(sorted, p);
        Some(Self {
            pairs: sorted.len(),
            min: *sorted.first()?,
            p25: q(0.25)?,
            median: q(0.5)?,
            p75: q(0.75)?,
            p95: q(0.95)?,
            max: *sorted.last()?,
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

/// Votes `t` for every unlabeled row at similarity threshold `d`.
pub fn votes(
    unlabeled: &Dataset,
    labeled: &Dataset,
    kernel: &GowerKernel,
    d: f64,
    workers: usize,
) -> Result<Vec<Option<f64>>, MatchError> {
    let params = SimilarityParams::new(d, 1.0, "vote sweep")?;
    Ok(match_batch(unlabeled, labeled, kernel, &params, workers)?
        .into_iter()
        .map(|m| m.vote)
        .collect())
}

/// Smallest `c` among `{0} ∪ {|t|}` for which the fraction of samples with
/// `|t| > c` is strictly below `target`; 1.0 if none qualifies.
pub fn confidence_from_votes(votes: &[Option<f64>], target: f64) -> f64 {
    let total = votes.len() as f64;
    let mut magnitudes: Vec<f64> = votes.iter().flatten().map(|t| t.abs()).collect();
    magnitudes.sort_by(f64::total_cmp);
    let within_budget = |c: f64| {
        let assigned = magnitudes.len() - magnitudes.partition_point(|&m| m <= c);
        (assigned as f64) / total < target
    };
    let mut candidates = Vec::with_capacity(magnitudes.len() + 1);
    candidates.push(0.0);
    candidates.extend(magnitudes.iter().copied());
    candidates.dedup();
    candidates.into_iter().find(|&c| within_budget(c)).unwrap_or(1.0)
}

/// Calibrates `c` so that fewer than `target_fraction` of the unlabeled rows
/// receive a label at threshold `d`.
pub fn calibrate_confidence_threshold(
    labeled: &Dataset,
    unlabeled: &Dataset,
    kernel: &GowerKernel,
    d: f64,
    target_fraction: f64,
    workers: usize,
) -> Result<f64, MatchError> {
    unit("target_fraction", target_fraction)?;
    if unlabeled.is_empty() {
        return Err(MatchError::EmptyUnlabeled);
    }
    let t = votes(unlabeled, labeled, kernel, d, workers)?;
    Ok(confidence_from_votes(&t, target_fraction))
}

/// Writes `id,t,y_hat,matched_count,<estimation-only features>`.
pub fn write_matches<W: Write>(
    results: &[MatchResult],
    schema: &FeatureSchema,
    writer: W,
) -> Result<(), MatchError> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "t", "y_hat", "matched_count"];
    header.extend(schema.estimation_names());
    csv.write_record(&header)?;
    let width = schema.estimation_indices().len();
    for m in results {
        let mut record = vec![
            m.unlabeled_id.clone(),
            format_value(m.vote),
            m.estimate.sign().to_string(),
            m.matched_count.to_string(),
        ];
        match &m.imputed {
            Some(values) => record.extend(values.iter().map(|v| format_value(*v))),
            None => record.extend(std::iter::repeat_n(String::new(), width)),
        }
        csv.write_record(&record)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a file written by [`write_matches`]. Contributor lists are not part
/// of the file and come back empty.
pub fn read_matches<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Vec<MatchResult>, MatchError> {
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers()?.clone();
    let mut expected = vec!["id", "t", "y_hat", "matched_count"];
    expected.extend(schema.estimation_names());
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(MatchError::Parse {
            row: 0,
            message: format!("header must be `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let bad = |message: String| MatchError::Parse { row, message };
        let num = |text: &str| -> Result<Option<f64>, MatchError> {
            if text.is_empty() {
                return Ok(None);
            }
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| bad(format!("non-numeric value `{text}`")))
        };
        let vote = num(&record[1])?;
        let estimate = record[2]
            .parse::<i64>()
            .ok()
            .and_then(Estimate::from_sign)
            .ok_or_else(|| bad(format!("y_hat must be -1, 0 or 1, found `{}`", &record[2])))?;
        let matched_count = record[3]
            .parse::<usize>()
            .map_err(|_| bad(format!("bad matched_count `{}`", &record[3])))?;
        let values = (4..record.len()).map(|c| num(&record[c])).collect::<Result<Vec<_>, _>>()?;
        out.push(MatchResult {
            unlabeled_id: record[0].to_string(),
            vote,
            estimate,
            imputed: estimate.is_confident().then_some(values),
            matched_count,
            top_contributors: Vec::new(),
        });
    }
    Ok(out)
}

/// Contributor details keyed by unlabeled id, in result order.
pub fn contributors_json(results: &[MatchResult]) -> serde_json::Value {
    let map = results
        .iter()
        .map(|m| {
            (
                m.unlabeled_id.clone(),
                serde_json::json!({
                    "matched_count": m.matched_count,
                    "top_contributors": m.top_contributors,
                }),
            )
        })
        .collect::<serde_json::Map<_, _>>();
    serde_json::Value::Object(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnSpec, Role};
    use crate::kernel::RangeTable;
    use chrono::NaiveDateTime;
    use indexmap::IndexMap;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec { name: "id".into(), role: Role::Id },
            ColumnSpec { name: "ts".into(), role: Role::Timestamp },
            ColumnSpec { name: "y".into(), role: Role::Label },
            ColumnSpec { name: "x".into(), role: Role::Similarity },
            ColumnSpec { name: "e1".into(), role: Role::EstimationOnly },
            ColumnSpec { name: "e2".into(), role: Role::EstimationOnly },
        ])
        .unwrap()
    }

    fn kernel() -> GowerKernel {
        let table = RangeTable {
            ranges: IndexMap::from([("x".to_string(), 1.0)]),
            bounds: IndexMap::new(),
            source: "unit".into(),
        };
        GowerKernel::new(&schema(), &table).unwrap()
    }

    fn row(id: &str, x: f64, label: Option<Label>, e: [Option<f64>; 2]) -> Sample {
        Sample {
            id: id.into(),
            timestamp: NaiveDateTime::default(),
            values: vec![Some(x), e[0], e[1]],
            label,
            origin: None,
        }
    }

    fn params(d: f64, c: f64) -> SimilarityParams {
        SimilarityParams::new(d, c, "manual").unwrap()
    }

    const POS: Option<Label> = Some(Label::Positive);
    const NEG: Option<Label> = Some(Label::Negative);

    #[test]
    fn no_neighbor_above_threshold_abstains() {
        let labeled = Dataset::new(schema(), vec![row("l1", 0.0, POS, [Some(1.0), None])], "l").unwrap();
        let u = row("u", 0.5, None, [None, None]);
        let m = estimate_label(&u, &labeled, &kernel(), &params(0.9, 0.0)).unwrap();
        assert_eq!((m.matched_count, m.vote, m.estimate, m.imputed), (0, None, Estimate::Abstain, None));
    }

    #[test]
    fn single_contributor_copies_its_features() {
        let labeled = Dataset::new(
            schema(),
            vec![row("l1", 0.03, POS, [Some(2.5), Some(7.0)]), row("l2", 0.9, NEG, [Some(0.0), Some(0.0)])],
            "l",
        )
        .unwrap();
        let u = row("u", 0.0, None, [None, None]);
        let m = estimate_label(&u, &labeled, &kernel(), &params(0.9, 0.5)).unwrap();
        assert_eq!(m.matched_count, 1);
        assert_eq!(m.vote, Some(1.0));
        assert_eq!(m.estimate, Estimate::Positive);
        assert_eq!(m.imputed, Some(vec![Some(2.5), Some(7.0)]));
        assert_eq!(m.top_contributors.len(), 1);
        assert!((m.top_contributors[0].similarity - 0.97).abs() < 1e-15);
    }

    #[test]
    fn three_neighbor_weighted_vote() {
        // Similarities 0.96, 0.94, 0.92 against u at x = 0.
        let labeled = Dataset::new(
            schema(),
            vec![
                row("a", 0.04, POS, [Some(1.0), None]),
                row("b", 0.06, POS, [Some(2.0), None]),
                row("c", 0.08, NEG, [Some(3.0), None]),
            ],
            "l",
        )
        .unwrap();
        let u = row("u", 0.0, None, [None, None]);
        let expected = (0.96 + 0.94 - 0.92) / 2.82;
        let m = estimate_label(&u, &labeled, &kernel(), &params(0.9, 0.3)).unwrap();
        assert!((m.vote.unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.3475).abs() < 1e-4);
        assert_eq!(m.estimate, Estimate::Positive);
        let imputed = m.imputed.unwrap();
        let e1 = (0.96 * 1.0 + 0.94 * 2.0 + 0.92 * 3.0) / 2.82;
        assert!((imputed[0].unwrap() - e1).abs() < 1e-12);
        assert_eq!(imputed[1], None);
        assert_eq!(
            m.top_contributors.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        let m = estimate_label(&u, &labeled, &kernel(), &params(0.9, 0.5)).unwrap();
        assert_eq!(m.estimate, Estimate::Abstain);
        assert_eq!(m.imputed, None);
        assert_eq!(m.matched_count, 3);
    }

    #[test]
    fn thresholds_are_strict() {
        let labeled = Dataset::new(schema(), vec![row("a", 0.5, POS, [None, None])], "l").unwrap();
        let u = row("u", 0.0, None, [None, None]);
        // similarity exactly 0.5 == d is excluded
        let m = estimate_label(&u, &labeled, &kernel(), &params(0.5, 0.0)).unwrap();
        assert_eq!(m.matched_count, 0);
        // t = 1 is never > c = 1
        let m = estimate_label(&u, &labeled, &kernel(), &params(0.4, 1.0)).unwrap();
        assert_eq!((m.vote, m.estimate), (Some(1.0), Estimate::Abstain));
    }

    #[test]
    fn unlabeled_reference_rows_are_rejected() {
        let labeled = Dataset::new(schema(), vec![row("a", 0.5, None, [None, None])], "l").unwrap();
        let u = row("u", 0.0, None, [None, None]);
        let err = estimate_label(&u, &labeled, &kernel(), &params(0.5, 0.0)).unwrap_err();
        assert!(matches!(err, MatchError::UnlabeledReference(ref id) if id == "a"));
    }

    #[test]
    fn top_contributors_are_capped() {
        let rows = (0..15).map(|i| row(&format!("l{i}"), i as f64 * 0.001, POS, [None, None])).collect();
        let labeled = Dataset::new(schema(), rows, "l").unwrap();
        let u = row("u", 0.0, None, [None, None]);
        let m = estimate_label(&u, &labeled, &kernel(), &params(0.5, 0.5)).unwrap();
        assert_eq!(m.matched_count, 15);
        assert_eq!(m.top_contributors.len(), TOP_CONTRIBUTORS);
        assert_eq!(m.top_contributors[0].id, "l0");
        assert!(m.top_contributors.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn empty_unlabeled_batch_is_empty() {
        let labeled = Dataset::new(schema(), vec![row("a", 0.5, POS, [None, None])], "l").unwrap();
        let unlabeled = Dataset::empty(schema(), "u");
        assert!(match_batch(&unlabeled, &labeled, &kernel(), &params(0.5, 0.5), 4).unwrap().is_empty());
    }

    #[test]
    fn similarity_threshold_on_ten_scores() {
        // Rows on a line with range 1: pairwise distances below give
        // similarities that are hand-checkable, but the nearest-rank rule is
        // what matters here.
        let rows = [0.0, 0.1, 0.3, 0.6, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| row(&format!("l{i}"), x, POS, [None, None]))
            .collect();
        let labeled = Dataset::new(schema(), rows, "l").unwrap();
        let scores = pairwise_similarities(&labeled, &kernel(), 1).unwrap();
        assert_eq!(scores.len(), 10);
        let d = calibrate_similarity_threshold(&labeled, &kernel(), 0.95, 1).unwrap();
        assert_eq!(d, scores[9]);
        let d50 = calibrate_similarity_threshold(&labeled, &kernel(), 0.5, 1).unwrap();
        assert_eq!(d50, scores[4]);
    }

    #[test]
    fn constant_similarities_give_that_value() {
        let rows = (0..4).map(|i| row(&format!("l{i}"), 0.25, POS, [None, None])).collect();
        let labeled = Dataset::new(schema(), rows, "l").unwrap();
        for p in [0.0, 0.3, 0.95, 1.0] {
            assert_eq!(calibrate_similarity_threshold(&labeled, &kernel(), p, 2).unwrap(), 1.0);
        }
        let one = Dataset::new(schema(), vec![row("a", 0.5, POS, [None, None])], "l").unwrap();
        assert!(matches!(
            calibrate_similarity_threshold(&one, &kernel(), 0.95, 1),
            Err(MatchError::TooFewLabeled(1))
        ));
    }

    #[test]
    fn confidence_sweep_on_known_votes() {
        // |t| = 0.01 .. 1.00, distinct; 5% of 100 means at most 4 assigned.
        let votes: Vec<Option<f64>> =
            (1..=100).map(|i| Some(if i % 2 == 0 { i as f64 / 100.0 } else { -(i as f64) / 100.0 })).collect();
        let c = confidence_from_votes(&votes, 0.05);
        assert_eq!(c, 0.96);
        let assigned = votes.iter().filter(|t| Estimate::from_vote(**t, c).is_confident()).count();
        assert_eq!(assigned, 4);
    }

    #[test]
    fn confidence_sweep_edge_cases() {
        assert_eq!(confidence_from_votes(&[Some(1.0), Some(-1.0), None], 0.05), 1.0);
        assert_eq!(confidence_from_votes(&[None, None], 0.05), 0.0);
        assert_eq!(confidence_from_votes(&[Some(0.2), None, None, None], 0.5), 0.0);
        assert_eq!(confidence_from_votes(&[Some(0.2), Some(0.2), None, None], 0.5), 0.2);
    }

    #[test]
    fn match_file_round_trips_without_contributors() {
        let labeled = Dataset::new(
            schema(),
            vec![row("a", 0.01, POS, [Some(0.1), None]), row("b", 0.9, NEG, [Some(4.0), Some(1.0)])],
            "l",
        )
        .unwrap();
        let unlabeled = Dataset::new(
            schema(),
            vec![row("u1", 0.0, None, [None, None]), row("u2", 0.5, None, [None, None])],
            "u",
        )
        .unwrap();
        let results = match_batch(&unlabeled, &labeled, &kernel(), &params(0.8, 0.2), 2).unwrap();
        let mut buf = Vec::new();
        write_matches(&results, &schema(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "id,t,y_hat,matched_count,e1,e2\nu1,1,1,1,0.1,\nu2,,0,0,,\n");
        let back = read_matches(buf.as_slice(), &schema()).unwrap();
        for (a, b) in results.iter().zip(&back) {
            assert_eq!((a.vote, a.estimate, &a.imputed, a.matched_count), (b.vote, b.estimate, &b.imputed, b.matched_count));
        }
        let json = contributors_json(&results);
        assert_eq!(json["u1"]["top_contributors"][0]["id"], "a");
    }
}
