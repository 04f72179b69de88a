//! Seeded synthetic datasets for demos and end-to-end checks.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{ColumnSpec, Dataset, FeatureSchema, Label, Role, Sample};
use crate::model::logistic;

fn epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time")
}

fn column(name: &str, role: Role) -> ColumnSpec {
    ColumnSpec { name: name.into(), role }
}

/// Two Gaussian blobs in the plane; the negative class sits left of `x = 0`
/// and the positive class to the right.
#[derive(Debug, Clone)]
pub struct TwoClusters {
    pub schema: FeatureSchema,
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    /// Generating cluster of each unlabeled row, in row order.
    pub truth: Vec<Label>,
    /// Half the distance between the cluster centers along `x`.
    pub separation: f64,
    pub spread: f64,
}

impl TwoClusters {
    /// Distance of a point's `x` coordinate from the midline between clusters.
    pub fn boundary_distance(&self, sample: &Sample) -> f64 {
        sample.values[0].map_or(f64::NAN, f64::abs)
    }
}

pub fn two_clusters(unlabeled_per_cluster: usize, labeled_per_cluster: usize, seed: u64) -> TwoClusters {
    let schema = FeatureSchema::new(vec![
        column("id", Role::Id),
        column("timestamp", Role::Timestamp),
        column("label", Role::Label),
        column("x", Role::Similarity),
        column("y", Role::Similarity),
    ])
    .expect("fixed schema is valid");
    let separation = 2.25;
    let spread = 1.0;
    let noise = Normal::new(0.0, spread).expect("positive spread");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |label: Label| {
        let cx = separation * label.value();
        vec![Some(cx + noise.sample(&mut rng)), Some(noise.sample(&mut rng))]
    };

    let mut labeled = Vec::new();
    for label in [Label::Negative, Label::Positive] {
        for i in 0..labeled_per_cluster {
            let values = draw(label);
            labeled.push(Sample {
                id: format!("L{}-{i:03}", if label == Label::Positive { "pos" } else { "neg" }),
                timestamp: epoch() + Duration::hours(labeled.len() as i64),
                values,
                label: Some(label),
                origin: None,
            });
        }
    }
    let mut unlabeled = Vec::new();
    let mut truth = Vec::new();
    for label in [Label::Negative, Label::Positive] {
        for _ in 0..unlabeled_per_cluster {
            let values = draw(label);
            unlabeled.push(Sample {
                id: format!("U{:04}", unlabeled.len()),
                timestamp: epoch() + Duration::hours(unlabeled.len() as i64),
                values,
                label: None,
                origin: None,
            });
            truth.push(label);
        }
    }
    TwoClusters {
        labeled: Dataset::new(schema.clone(), labeled, "two clusters, labeled").expect("consistent rows"),
        unlabeled: Dataset::new(schema.clone(), unlabeled, "two clusters, unlabeled").expect("consistent rows"),
        schema,
        truth,
        separation,
        spread,
    }
}

/// Scales the label logit; below 1 the labels get noisier.
const LABEL_SIGNAL: f64 = 0.5;
/// Unlabeled rows come from a narrower population than labeled rows.
const UNLABELED_SPREAD: f64 = 0.6;

/// Sizes for [`pipeline_fixture`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSpec {
    pub labeled: usize,
    pub unlabeled: usize,
    pub seed: u64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self { labeled: 1000, unlabeled: 4000, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineFixture {
    pub schema: FeatureSchema,
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    /// Labeled row whose noise-free logit is closest to zero.
    pub boundary_sample: String,
}

/// Noisy-label tabular data with four similarity features `s1..s4` and two
/// estimation-only features `e1, e2` that unlabeled rows lack. Unlabeled
/// rows are drawn from a narrower population than labeled rows, so they sit
/// in densely labeled regions. All rows are spread over one year of
/// timestamps; about 2% of unlabeled `s3` cells are missing.
pub fn pipeline_fixture(spec: PipelineSpec) -> PipelineFixture {
    let schema = FeatureSchema::new(vec![
        column("id", Role::Id),
        column("timestamp", Role::Timestamp),
        column("label", Role::Label),
        column("s1", Role::Similarity),
        column("s2", Role::Similarity),
        column("s3", Role::Similarity),
        column("s4", Role::Similarity),
        column("e1", Role::EstimationOnly),
        column("e2", Role::EstimationOnly),
    ])
    .expect("fixed schema is valid");
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let year_seconds = 365 * 24 * 3600;

    let row = |rng: &mut ChaCha8Rng, spread: f64| {
        let s1: f64 = spread * std_normal.sample(rng);
        let s2: f64 = spread * std_normal.sample(rng);
        let s3: f64 = spread * std_normal.sample(rng);
        let s4: f64 = (spread * std_normal.sample(rng)).exp();
        let e1 = 0.8 * s1 + 0.5 * std_normal.sample(rng);
        let e2 = 0.6 * s2 - 0.4 * s4 + 0.6 * std_normal.sample(rng);
        let z = -0.2 + LABEL_SIGNAL * (1.2 * s1 - 0.8 * s2 + 0.5 * s3 + 0.7 * e1 - 0.5 * e2);
        let label = if rng.random::<f64>() < logistic(z) { Label::Positive } else { Label::Negative };
        (vec![Some(s1), Some(s2), Some(s3), Some(s4), Some(e1), Some(e2)], label, z)
    };

    let mut labeled = Vec::with_capacity(spec.labeled);
    let mut boundary = (f64::INFINITY, String::new());
    for i in 0..spec.labeled {
        let (values, label, z) = row(&mut rng, 1.0);
        if z.abs() < boundary.0 {
            boundary = (z.abs(), format!("L{i:05}"));
        }
        let offset = rng.random_range(0..year_seconds);
        labeled.push(Sample {
            id: format!("L{i:05}"),
            timestamp: epoch() + Duration::seconds(offset),
            values,
            label: Some(label),
            origin: None,
        });
    }
    let mut unlabeled = Vec::with_capacity(spec.unlabeled);
    for i in 0..spec.unlabeled {
        let (mut values, _, _) = row(&mut rng, UNLABELED_SPREAD);
        values[4] = None;
        values[5] = None;
        if rng.random::<f64>() < 0.02 {
            values[2] = None;
        }
        let offset = rng.random_range(0..year_seconds);
        unlabeled.push(Sample {
            id: format!("U{i:05}"),
            timestamp: epoch() + Duration::seconds(offset),
            values,
            label: None,
            origin: None,
        });
    }
    PipelineFixture {
        labeled: Dataset::new(schema.clone(), labeled, "synthetic labeled").expect("consistent rows"),
        unlabeled: Dataset::new(schema.clone(), unlabeled, "synthetic unlabeled").expect("consistent rows"),
        schema,
        boundary_sample: boundary.1,
    }
}
