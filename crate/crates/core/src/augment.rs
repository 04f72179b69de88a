//! Turning confident matches into labeled "similar" rows and merging them
//! with observed data.

use std::collections::{HashMap, HashSet};
use std::ops::Deref;

use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Sample, SimilarOrigin};
use crate::matcher::MatchResult;

/// Prefix given to similar-row ids when merged with real rows.
pub const SIMILAR_ID_PREFIX: &str = "similar:";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("match refers to id `{0}`, which is not in the unlabeled dataset")]
    UnknownId(String),
    #[error("match for `{id}` carries {found} imputed values, schema has {expected} estimation-only features")]
    ImputedWidth { id: String, expected: usize, found: usize },
    #[error("schemas differ: real data has columns {real:?}, similar data has {similar:?}")]
    SchemaMismatch { real: Vec<String>, similar: Vec<String> },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Rows synthesized from confident matches; every row has `origin` set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarDataset(Dataset);

impl SimilarDataset {
    pub fn into_inner(self) -> Dataset {
        self.0
    }
}

impl Deref for SimilarDataset {
    type Target = Dataset;

    fn deref(&self) -> &Dataset {
        &self.0
    }
}

/// One row per confident match, in match order. Similarity features come
/// from the unlabeled row, estimation-only features from the imputation.
pub fn build_similar_dataset(
    matches: &[MatchResult],
    unlabeled: &Dataset,
) -> Result<SimilarDataset, AugmentError> {
    let schema = unlabeled.schema();
    let by_id: HashMap<&str, &Sample> = unlabeled.rows().iter().map(|r| (r.id.as_str(), r)).collect();
    let estimation = schema.estimation_indices();
    let mut rows = Vec::new();
    for m in matches {
        let source = by_id
            .get(m.unlabeled_id.as_str())
            .ok_or_else(|| AugmentError::UnknownId(m.unlabeled_id.clone()))?;
        let (Some(label), Some(imputed), Some(vote)) = (m.estimate.label(), &m.imputed, m.vote) else {
            continue;
        };
        if imputed.len() != estimation.len() {
            return Err(AugmentError::ImputedWidth {
                id: m.unlabeled_id.clone(),
                expected: estimation.len(),
                found: imputed.len(),
            });
        }
        let mut values = source.values.clone();
        for (&col, value) in estimation.iter().zip(imputed) {
            values[col] = *value;
        }
        rows.push(Sample {
            id: source.id.clone(),
            timestamp: source.timestamp,
            values,
            label: Some(label),
            origin: Some(SimilarOrigin { vote, matched_count: m.matched_count }),
        });
    }
    let mut data = Dataset::new(
        schema.clone(),
        rows,
        format!("similar rows matched from {}", unlabeled.provenance),
    )?;
    data.tracks_origin = true;
    Ok(SimilarDataset(data))
}

/// Real rows followed by similar rows. Similar ids get
/// [`SIMILAR_ID_PREFIX`] (repeated until unique); real rows are unchanged.
pub fn merge_datasets(real: &Dataset, similar: &SimilarDataset) -> Result<Dataset, AugmentError> {
    if real.schema() != similar.schema() {
        let names = |d: &Dataset| d.schema().columns().iter().map(|c| format!("{}:{}", c.name, c.role)).collect();
        return Err(AugmentError::SchemaMismatch { real: names(real), similar: names(similar) });
    }
    let mut taken: HashSet<String> = real.rows().iter().map(|r| r.id.clone()).collect();
    let mut rows: Vec<Sample> = real.rows().to_vec();
    for row in similar.rows() {
        let mut id = format!("{SIMILAR_ID_PREFIX}{}", row.id);
        while taken.contains(&id) {
            id.insert_str(0, SIMILAR_ID_PREFIX);
        }
        taken.insert(id.clone());
        rows.push(Sample { id, ..row.clone() });
    }
    let mut merged = Dataset::new(
        real.schema().clone(),
        rows,
        format!("{} + {}", real.provenance, similar.provenance),
    )?;
    merged.tracks_origin = true;
    Ok(merged)
}

/// Rows whose provenance is "real", i.e. the observed part of a merge.
pub fn real_rows(data: &Dataset) -> Dataset {
    let mut out = data.filtered(data.provenance.clone(), |r| r.origin.is_none());
    out.tracks_origin = false;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnSpec, FeatureSchema, Label, Role};
    use crate::matcher::Estimate;
    use chrono::NaiveDateTime;

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

    fn sample(id: &str, label: Option<Label>) -> Sample {
        Sample {
            id: id.into(),
            timestamp: NaiveDateTime::default(),
            values: vec![Some(1.0), None, None],
            label,
            origin: None,
        }
    }

    fn unlabeled(n: usize) -> Dataset {
        Dataset::new(schema(), (0..n).map(|i| sample(&format!("u{i}"), None)).collect(), "u").unwrap()
    }

    fn result(id: &str, vote: Option<f64>, estimate: Estimate) -> MatchResult {
        MatchResult {
            unlabeled_id: id.into(),
            vote,
            estimate,
            imputed: estimate.is_confident().then(|| vec![Some(2.5), Some(7.0)]),
            matched_count: if vote.is_some() { 2 } else { 0 },
            top_contributors: Vec::new(),
        }
    }

    #[test]
    fn unconfident_matches_give_empty_set() {
        let u = unlabeled(3);
        let matches: Vec<_> = u.rows().iter().map(|r| result(&r.id, Some(0.1), Estimate::Abstain)).collect();
        let similar = build_similar_dataset(&matches, &u).unwrap();
        assert!(similar.is_empty());
    }

    #[test]
    fn keeps_only_confident_rows_in_order() {
        let u = unlabeled(100);
        let confident = [7usize, 21, 22, 90];
        let matches: Vec<_> = u
            .rows()
            .iter()
            .enumerate()
            .map(|(i, r)| match confident.iter().position(|&c| c == i) {
                Some(k) if k % 2 == 0 => result(&r.id, Some(0.9), Estimate::Positive),
                Some(_) => result(&r.id, Some(-0.8), Estimate::Negative),
                None => result(&r.id, None, Estimate::Abstain),
            })
            .collect();
        let similar = build_similar_dataset(&matches, &u).unwrap();
        assert_eq!(similar.len(), 4);
        let ids: Vec<_> = similar.rows().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["u7", "u21", "u22", "u90"]);
        let labels: Vec<_> = similar.rows().iter().map(|r| r.label.unwrap()).collect();
        assert_eq!(labels, [Label::Positive, Label::Negative, Label::Positive, Label::Negative]);
        assert_eq!(similar.rows()[1].origin, Some(SimilarOrigin { vote: -0.8, matched_count: 2 }));
    }

    #[test]
    fn imputed_values_fill_estimation_columns() {
        let u = unlabeled(1);
        let similar = build_similar_dataset(&[result("u0", Some(1.0), Estimate::Positive)], &u).unwrap();
        assert_eq!(similar.rows()[0].values, vec![Some(1.0), Some(2.5), Some(7.0)]);
    }

    #[test]
    fn missing_similarity_cells_survive_as_similar_rows() {
        let mut row = sample("u0", None);
        row.values[0] = None;
        let u = Dataset::new(schema(), vec![row], "u").unwrap();
        let similar = build_similar_dataset(&[result("u0", Some(1.0), Estimate::Positive)], &u).unwrap();
        assert_eq!(similar.len(), 1);
        assert_eq!(similar.rows()[0].values, vec![None, Some(2.5), Some(7.0)]);
    }

    #[test]
    fn unknown_match_id_is_an_error() {
        let err = build_similar_dataset(&[result("zz", None, Estimate::Abstain)], &unlabeled(1)).unwrap_err();
        assert!(matches!(err, AugmentError::UnknownId(ref id) if id == "zz"));
    }

    #[test]
    fn merge_with_empty_similar_is_identity_plus_provenance() {
        let real = Dataset::new(schema(), vec![sample("a", Some(Label::Positive))], "real").unwrap();
        let empty = build_similar_dataset(&[], &unlabeled(0)).unwrap();
        let merged = merge_datasets(&real, &empty).unwrap();
        assert!(merged.tracks_origin);
        assert_eq!(merged.rows(), real.rows());
    }

    #[test]
    fn merge_counts_and_recovers_real_rows() {
        let real = Dataset::new(
            schema(),
            (0..80).map(|i| sample(&format!("r{i}"), Some(Label::Negative))).collect(),
            "real",
        )
        .unwrap();
        let u = unlabeled(4);
        let matches: Vec<_> = u.rows().iter().map(|r| result(&r.id, Some(1.0), Estimate::Positive)).collect();
        let similar = build_similar_dataset(&matches, &u).unwrap();
        let merged = merge_datasets(&real, &similar).unwrap();
        assert_eq!(merged.len(), 84);
        assert_eq!(merged.rows().iter().filter(|r| r.origin.is_some()).count(), 4);
        assert_eq!(real_rows(&merged).rows(), real.rows());
    }

    #[test]
    fn duplicate_ids_are_prefixed() {
        let real = Dataset::new(
            schema(),
            vec![sample("u0", Some(Label::Positive)), sample("similar:u0", Some(Label::Negative))],
            "real",
        )
        .unwrap();
        let similar = build_similar_dataset(&[result("u0", Some(1.0), Estimate::Positive)], &unlabeled(1)).unwrap();
        let merged = merge_datasets(&real, &similar).unwrap();
        let ids: Vec<_> = merged.rows().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["u0", "similar:u0", "similar:similar:u0"]);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let other = FeatureSchema::new(vec![
            ColumnSpec { name: "id".into(), role: Role::Id },
            ColumnSpec { name: "ts".into(), role: Role::Timestamp },
            ColumnSpec { name: "y".into(), role: Role::Label },
            ColumnSpec { name: "x".into(), role: Role::Similarity },
        ])
        .unwrap();
        let real = Dataset::empty(other, "real");
        let similar = build_similar_dataset(&[], &unlabeled(0)).unwrap();
        assert!(matches!(merge_datasets(&real, &similar), Err(AugmentError::SchemaMismatch { .. })));
    }
}
