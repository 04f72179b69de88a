//! Gower similarity over the similarity features.
//!
//! Each feature contributes `1 - |a_k - b_k| / r_k`, clamped to `[0, 1]`,
//! and the kernel is the mean contribution over features present in both
//! samples. Ranges `r_k` are pooled once and then frozen in a
//! [`RangeTable`], so every comparison in a run uses the same scale.

use std::io;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, FeatureSchema, Sample};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("similarity feature `{0}` is missing in every source row")]
    FeatureAllMissing(String),
    #[error("range table has no entry for similarity feature `{0}`")]
    MissingRange(String),
    #[error("range for `{feature}` must be finite and non-negative, got {value}")]
    InvalidRange { feature: String, value: f64 },
    #[error("no similarity feature is present in both samples")]
    NoCommonFeatures,
    #[error("no source datasets given")]
    NoSources,
    #[error("invalid range table JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Frozen per-feature ranges `r_k = max - min`, plus the observed bounds
/// they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTable {
    pub ranges: IndexMap<String, f64>,
    /// Observed `[min, max]` per feature. Used to clamp synthesized values.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub bounds: IndexMap<String, [f64; 2]>,
    pub source: String,
}

impl RangeTable {
    pub fn range(&self, feature: &str) -> Option<f64> {
        self.ranges.get(feature).copied()
    }

    pub fn bounds(&self, feature: &str) -> Option<(f64, f64)> {
        self.bounds.get(feature).map(|b| (b[0], b[1]))
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), KernelError> {
        for name in schema.similarity_names() {
            match self.range(name) {
                None => return Err(KernelError::MissingRange(name.to_string())),
                Some(r) if !r.is_finite() || r < 0.0 => {
                    return Err(KernelError::InvalidRange { feature: name.to_string(), value: r })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("range table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KernelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Pools every non-missing value of each similarity feature across
/// `sources` and records `max - min`.
pub fn compute_ranges(sources: &[&Dataset], schema: &FeatureSchema) -> Result<RangeTable, KernelError> {
    if sources.is_empty() {
        return Err(KernelError::NoSources);
    }
    let mut ranges = IndexMap::new();
    let mut bounds = IndexMap::new();
    for name in schema.similarity_names() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for data in sources {
            let Some(idx) = data.schema().value_index(name) else { continue };
            for v in data.rows().iter().filter_map(|r| r.values[idx]) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo > hi {
            return Err(KernelError::FeatureAllMissing(name.to_string()));
        }
        ranges.insert(name.to_string(), (hi - lo).abs());
        bounds.insert(name.to_string(), [lo, hi]);
    }
    let source = sources
        .iter()
        .map(|d| format!("{} ({} rows)", d.provenance, d.len()))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(RangeTable { ranges, bounds, source })
}

/// A similarity value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Similarity of one feature pair given its range.
#[inline]
pub fn feature_similarity(a: f64, b: f64, range: f64) -> f64 {
    if range > 0.0 {
        1.0 - ((a - b).abs() / range).min(1.0)
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

/// Gower kernel bound to a schema: positions of the similarity features in
/// a sample's value vector and their frozen ranges.
#[derive(Debug, Clone)]
pub struct GowerKernel {
    columns: Vec<usize>,
    ranges: Vec<f64>,
}

impl GowerKernel {
    pub fn new(schema: &FeatureSchema, table: &RangeTable) -> Result<Self, KernelError> {
        table.validate(schema)?;
        let ranges = schema
            .similarity_names()
            .map(|name| table.range(name).expect("validated"))
            .collect();
        Ok(Self { columns: schema.similarity_indices().to_vec(), ranges })
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len()
    }

    /// Kernel over two value vectors laid out by the bound schema.
    pub fn similarity_values(&self, a: &[Option<f64>], b: &[Option<f64>]) -> Result<f64, KernelError> {
        let mut total = 0.0;
        let mut present = 0usize;
        for (&col, &range) in self.columns.iter().zip(&self.ranges) {
            if let (Some(x), Some(y)) = (a[col], b[col]) {
                total += feature_similarity(x, y, range);
                present += 1;
            }
        }
        if present == 0 {
            return Err(KernelError::NoCommonFeatures);
        }
        Ok(total / present as f64)
    }

    pub fn similarity(&self, a: &Sample, b: &Sample) -> Result<SimilarityScore, KernelError> {
        self.similarity_values(&a.values, &b.values).map(SimilarityScore)
    }
}

pub fn gower_similarity(
    a: &Sample,
    b: &Sample,
    schema: &FeatureSchema,
    ranges: &RangeTable,
) -> Result<SimilarityScore, KernelError> {
    GowerKernel::new(schema, ranges)?.similarity(a, b)
}
