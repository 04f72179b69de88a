//! Independent oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use chrono::{Duration, NaiveDate, NaiveDateTime};
use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use simmatch::dataset::{ColumnSpec, Dataset, FeatureSchema, Label, Role, Sample};
use simmatch::kernel::RangeTable;

pub fn epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

/// Schema with similarity features `f0..` followed by estimation-only `e0..`.
pub fn schema(similarity: usize, estimation: usize) -> FeatureSchema {
    let mut cols = vec![
        ColumnSpec { name: "id".into(), role: Role::Id },
        ColumnSpec { name: "ts".into(), role: Role::Timestamp },
        ColumnSpec { name: "y".into(), role: Role::Label },
    ];
    cols.extend((0..similarity).map(|i| ColumnSpec { name: format!("f{i}"), role: Role::Similarity }));
    cols.extend((0..estimation).map(|i| ColumnSpec { name: format!("e{i}"), role: Role::EstimationOnly }));
    FeatureSchema::new(cols).unwrap()
}

pub fn sample(id: impl Into<String>, values: Vec<Option<f64>>, label: Option<Label>) -> Sample {
    Sample { id: id.into(), timestamp: epoch(), values, label, origin: None }
}

pub fn sample_at(id: impl Into<String>, day: i64, values: Vec<Option<f64>>, label: Option<Label>) -> Sample {
    Sample { id: id.into(), timestamp: epoch() + Duration::days(day), values, label, origin: None }
}

pub fn range_table(names: &[String], ranges: &[f64]) -> RangeTable {
    RangeTable {
        ranges: names.iter().cloned().zip(ranges.iter().copied()).collect(),
        bounds: IndexMap::new(),
        source: "test".into(),
    }
}

/// Gower coefficient by direct summation over co-present features.
pub fn oracle_similarity(a: &[Option<f64>], b: &[Option<f64>], ranges: &[f64]) -> Option<f64> {
    let mut terms = Vec::new();
    for (k, &r) in ranges.iter().enumerate() {
        let (Some(x), Some(y)) = (a[k], b[k]) else { continue };
        let s = if r == 0.0 {
            if x == y {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - ((x - y).abs() / r).clamp(0.0, 1.0)
        };
        terms.push(s);
    }
    if terms.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for s in &terms {
        total += s;
    }
    Some(total / terms.len() as f64)
}

/// One brute-force match: (t, ŷ sign, x̂, matched_count).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatch {
    pub vote: Option<f64>,
    pub sign: i8,
    pub imputed: Option<Vec<Option<f64>>>,
    pub matched_count: usize,
}

/// Double loop over labeled rows for one unlabeled row. Similarity columns
/// come first in the value vector, estimation-only columns after.
pub fn oracle_match(
    u: &[Option<f64>],
    labeled: &[(Vec<Option<f64>>, f64)],
    ranges: &[f64],
    estimation: usize,
    d: f64,
    c: f64,
) -> OracleMatch {
    let sim = ranges.len();
    let mut weights = Vec::with_capacity(labeled.len());
    for (x, _) in labeled {
        let k = oracle_similarity(x, u, ranges).expect("co-present features");
        weights.push(if k > d { k } else { 0.0 });
    }
    let mut w_sum = 0.0;
    let mut wy_sum = 0.0;
    let mut matched = 0;
    for ((_, y), &w) in labeled.iter().zip(&weights) {
        if w > 0.0 {
            w_sum += w;
            wy_sum += w * y;
            matched += 1;
        }
    }
    let vote = if w_sum > 0.0 { Some(wy_sum / w_sum) } else { None };
    let sign = match vote {
        Some(t) if t > c => 1,
        Some(t) if t < -c => -1,
        _ => 0,
    };
    let imputed = (sign != 0).then(|| {
        (0..estimation)
            .map(|e| {
                let mut num = 0.0;
                let mut den = 0.0;
                for ((x, _), &w) in labeled.iter().zip(&weights) {
                    if w > 0.0 {
                        if let Some(v) = x[sim + e] {
                            num += w * v;
                            den += w;
                        }
                    }
                }
                if den > 0.0 {
                    Some(num / den)
                } else {
                    None
                }
            })
            .collect()
    });
    OracleMatch { vote, sign, imputed, matched_count: matched }
}

/// Pairwise concordance: P(score_pos > score_neg) + ½ P(tie).
pub fn oracle_auc(pairs: &[(f64, bool)]) -> Option<f64> {
    let pos: Vec<f64> = pairs.iter().filter(|p| p.1).map(|p| p.0).collect();
    let neg: Vec<f64> = pairs.iter().filter(|p| !p.1).map(|p| p.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Random value on a coarse grid so that ties and equal values occur.
pub fn coarse(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let steps = 20.0;
    lo + (hi - lo) * (rng.random_range(0..=20) as f64) / steps
}

/// Random labeled/unlabeled instance for the matcher. Every row has at least
/// one similarity feature; unlabeled rows may miss others, labeled rows may
/// miss estimation-only features.
pub struct MatchInstance {
    pub schema: FeatureSchema,
    pub labeled: Dataset,
    pub unlabeled: Dataset,
}

pub fn random_match_instance(rng: &mut ChaCha8Rng, max_labeled: usize, max_unlabeled: usize) -> MatchInstance {
    let sim = rng.random_range(1..=5);
    let est = rng.random_range(0..=3);
    let schema = schema(sim, est);
    let n_lab = rng.random_range(1..=max_labeled);
    let n_unl = rng.random_range(0..=max_unlabeled);
    let mut labeled = Vec::new();
    for i in 0..n_lab {
        let mut values: Vec<Option<f64>> = (0..sim).map(|_| Some(coarse(rng, -1.0, 1.0))).collect();
        values.extend((0..est).map(|_| rng.random_bool(0.8).then(|| coarse(rng, 0.0, 10.0))));
        let label = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
        labeled.push(sample(format!("l{i}"), values, Some(label)));
    }
    let mut unlabeled = Vec::new();
    for j in 0..n_unl {
        let mut values: Vec<Option<f64>> =
            (0..sim).map(|_| rng.random_bool(0.85).then(|| coarse(rng, -1.2, 1.2))).collect();
        if values.iter().all(Option::is_none) {
            values[0] = Some(coarse(rng, -1.0, 1.0));
        }
        values.extend((0..est).map(|_| None));
        unlabeled.push(sample(format!("u{j}"), values, None));
    }
    MatchInstance {
        labeled: Dataset::new(schema.clone(), labeled, "random labeled").unwrap(),
        unlabeled: Dataset::new(schema.clone(), unlabeled, "random unlabeled").unwrap(),
        schema,
    }
}
