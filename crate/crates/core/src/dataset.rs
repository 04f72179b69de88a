//! Tabular datasets: schema declaration, delimited-text IO and the
//! time-holdout split.
//!
//! A [`FeatureSchema`] assigns every column one [`Role`]. Value columns are
//! the similarity features (compared by the kernel) and the estimation-only
//! features (absent from unlabeled data, imputed by the matcher). Each
//! [`Sample`] stores its values in schema order, so feature lookups by index
//! are shared across every dataset built on the same schema.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::ceil_count;

/// Column names reserved for provenance of matched ("similar") rows.
pub const SOURCE_COLUMN: &str = "source";
pub const VOTE_COLUMN: &str = "vote";
pub const MATCHED_COUNT_COLUMN: &str = "matched_count";
const RESERVED: [&str; 3] = [SOURCE_COLUMN, VOTE_COLUMN, MATCHED_COUNT_COLUMN];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema needs exactly one {role} column, found {found}")]
    RoleCount { role: Role, found: usize },
    #[error("schema needs at least one similarity feature")]
    NoSimilarityFeature,
    #[error("duplicate column name `{0}` in schema")]
    DuplicateName(String),
    #[error("column name `{0}` is reserved for provenance")]
    ReservedName(String),
    #[error("invalid schema JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("header is missing required column `{0}`")]
    MissingColumn(String),
    #[error("header repeats column `{0}`")]
    DuplicateHeader(String),
    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount { row: usize, expected: usize, found: usize },
    #[error("row {row}: non-numeric value `{value}` in column `{column}`")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}: label must be -1 or +1, found `{value}`")]
    InvalidLabel { row: usize, value: String },
    #[error("row {row}: cannot parse timestamp `{value}`")]
    InvalidTimestamp { row: usize, value: String },
    #[error("row {row}: invalid provenance value `{value}` in column `{column}`")]
    InvalidProvenance { row: usize, column: String, value: String },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: empty id")]
    EmptyId { row: usize },
    #[error("row {row}: labeled sample is missing similarity feature `{column}`")]
    MissingSimilarity { row: usize, column: String },
    #[error("row {row}: expected {expected} feature values, found {found}")]
    ValueCount { row: usize, expected: usize, found: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("fraction {0} is outside [0, 1]")]
    Fraction(f64),
}

/// What a column means to the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Present in labeled and unlabeled data; compared by the kernel.
    Similarity,
    /// Only known for labeled data; imputed for matched unlabeled samples.
    EstimationOnly,
    Label,
    Timestamp,
    Id,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::Similarity => "similarity",
            Role::EstimationOnly => "estimation-only",
            Role::Label => "label",
            Role::Timestamp => "timestamp",
            Role::Id => "id",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
}

/// Validated column layout shared by every dataset in a run.
///
/// Serialized as a JSON object mapping column name to role, in column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, Role>", into = "IndexMap<String, Role>")]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
    id: String,
    timestamp: String,
    label: String,
    values: Vec<String>,
    similarity: Vec<usize>,
    estimation: Vec<usize>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for column in &columns {
            if RESERVED.contains(&column.name.as_str()) {
                return Err(SchemaError::ReservedName(column.name.clone()));
            }
            if !seen.insert(column.name.as_str()) {
                return Err(SchemaError::DuplicateName(column.name.clone()));
            }
        }
        let single = |role: Role| -> Result<String, SchemaError> {
            let named: Vec<&ColumnSpec> = columns.iter().filter(|c| c.role == role).collect();
            match named.as_slice() {
                [one] => Ok(one.name.clone()),
                _ => Err(SchemaError::RoleCount { role, found: named.len() }),
            }
        };
        let id = single(Role::Id)?;
        let timestamp = single(Role::Timestamp)?;
        let label = single(Role::Label)?;

        let mut values = Vec::new();
        let mut similarity = Vec::new();
        let mut estimation = Vec::new();
        for column in &columns {
            match column.role {
                Role::Similarity => similarity.push(values.len()),
                Role::EstimationOnly => estimation.push(values.len()),
                _ => continue,
            }
            values.push(column.name.clone());
        }
        if similarity.is_empty() {
            return Err(SchemaError::NoSimilarityFeature);
        }
        Ok(Self { columns, id, timestamp, label, values, similarity, estimation })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn id_column(&self) -> &str {
        &self.id
    }

    pub fn timestamp_column(&self) -> &str {
        &self.timestamp
    }

    pub fn label_column(&self) -> &str {
        &self.label
    }

    /// Names of all value features (similarity and estimation-only), in
    /// the order samples store them.
    pub fn value_features(&self) -> &[String] {
        &self.values
    }

    /// Positions of the similarity features within [`Self::value_features`].
    pub fn similarity_indices(&self) -> &[usize] {
        &self.similarity
    }

    /// Positions of the estimation-only features within [`Self::value_features`].
    pub fn estimation_indices(&self) -> &[usize] {
        &self.estimation
    }

    pub fn similarity_names(&self) -> impl Iterator<Item = &str> {
        self.similarity.iter().map(|&i| self.values[i].as_str())
    }

    pub fn estimation_names(&self) -> impl Iterator<Item = &str> {
        self.estimation.iter().map(|&i| self.values[i].as_str())
    }

    pub fn value_index(&self, name: &str) -> Option<usize> {
        self.values.iter().position(|v| v == name)
    }

    pub fn role_of(&self, name: &str) -> Option<Role> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.role)
    }
}

impl TryFrom<IndexMap<String, Role>> for FeatureSchema {
    type Error = SchemaError;

    fn try_from(map: IndexMap<String, Role>) -> Result<Self, Self::Error> {
        Self::new(map.into_iter().map(|(name, role)| ColumnSpec { name, role }).collect())
    }
}

impl From<FeatureSchema> for IndexMap<String, Role> {
    fn from(schema: FeatureSchema) -> Self {
        schema.columns.into_iter().map(|c| (c.name, c.role)).collect()
    }
}

/// Binary outcome: `+1` for a defaulted loan, `-1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(value: i64) -> Option<Self> {
        match value {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.sign())
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "1" | "+1" => Some(Label::Positive),
            "-1" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

/// Provenance of a row produced by the matcher rather than observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarOrigin {
    pub vote: f64,
    pub matched_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub timestamp: NaiveDateTime,
    /// Values aligned with [`FeatureSchema::value_features`]; `None` is missing.
    pub values: Vec<Option<f64>>,
    pub label: Option<Label>,
    /// `Some` only for rows synthesized from confident matches.
    pub origin: Option<SimilarOrigin>,
}

impl Sample {
    pub fn value(&self, schema: &FeatureSchema, name: &str) -> Option<f64> {
        schema.value_index(name).and_then(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Sample>,
    pub provenance: String,
    /// Whether the file form carries the `source`/`vote`/`matched_count` columns.
    pub tracks_origin: bool,
}

impl Dataset {
    /// Builds a dataset, checking row shape, label presence rules and id
    /// uniqueness.
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Sample>,
        provenance: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let mut ids = HashSet::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let row_no = i + 1;
            check_row(&schema, row, row_no)?;
            if !ids.insert(row.id.as_str()) {
                return Err(DatasetError::DuplicateId { row: row_no, id: row.id.clone() });
            }
        }
        let tracks_origin = rows.iter().any(|r| r.origin.is_some());
        Ok(Self { schema, rows, provenance: provenance.into(), tracks_origin })
    }

    pub fn empty(schema: FeatureSchema, provenance: impl Into<String>) -> Self {
        Self { schema, rows: Vec::new(), provenance: provenance.into(), tracks_origin: false }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Sample> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.rows.iter().filter(|r| r.label.is_some()).count()
    }

    pub fn find(&self, id: &str) -> Option<&Sample> {
        self.rows.iter().find(|r| r.id == id)
    }

    /// Subset of rows selected by `keep`, sharing schema and provenance flag.
    pub fn filtered(&self, provenance: impl Into<String>, keep: impl Fn(&Sample) -> bool) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: provenance.into(),
            tracks_origin: self.tracks_origin,
        }
    }
}

fn check_row(schema: &FeatureSchema, row: &Sample, row_no: usize) -> Result<(), DatasetError> {
    if row.id.is_empty() {
        return Err(DatasetError::EmptyId { row: row_no });
    }
    let expected = schema.value_features().len();
    if row.values.len() != expected {
        return Err(DatasetError::ValueCount { row: row_no, expected, found: row.values.len() });
    }
    // Similar rows keep the unlabeled row's gaps; the kernel skipped them.
    if row.label.is_some() && row.origin.is_none() {
        for &i in schema.similarity_indices() {
            if row.values[i].is_none() {
                return Err(DatasetError::MissingSimilarity {
                    row: row_no,
                    column: schema.value_features()[i].clone(),
                });
            }
        }
    }
    Ok(())
}

pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(text).ok().map(|t| t.naive_utc()))
        .or_else(|| {
            NaiveDate::parse_from_str(text, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Formats a value with the shortest representation that parses back to
/// the same `f64`.
pub fn format_value(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_value(text: &str, row: usize, column: &str) -> Result<Option<f64>, DatasetError> {
    if text.is_empty() {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(DatasetError::NonNumeric {
            row,
            column: column.to_string(),
            value: text.to_string(),
        }),
    }
}

struct HeaderMap {
    id: usize,
    timestamp: usize,
    label: Option<usize>,
    values: Vec<Option<usize>>,
    source: Option<usize>,
    vote: Option<usize>,
    matched_count: Option<usize>,
}

impl HeaderMap {
    fn new(schema: &FeatureSchema, header: &csv::StringRecord) -> Result<Self, DatasetError> {
        let mut positions = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            if positions.insert(name, i).is_some() {
                return Err(DatasetError::DuplicateHeader(name.to_string()));
            }
        }
        let required = |name: &str| {
            positions.get(name).copied().ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
        };
        let id = required(schema.id_column())?;
        let timestamp = required(schema.timestamp_column())?;
        let mut values = Vec::with_capacity(schema.value_features().len());
        for name in schema.value_features() {
            let pos = positions.get(name.as_str()).copied();
            if pos.is_none() && schema.role_of(name) == Some(Role::Similarity) {
                return Err(DatasetError::MissingColumn(name.clone()));
            }
            values.push(pos);
        }
        Ok(Self {
            id,
            timestamp,
            label: positions.get(schema.label_column()).copied(),
            values,
            source: positions.get(SOURCE_COLUMN).copied(),
            vote: positions.get(VOTE_COLUMN).copied(),
            matched_count: positions.get(MATCHED_COUNT_COLUMN).copied(),
        })
    }
}

/// Reads a comma-separated dataset with a header row.
///
/// Label and estimation-only columns may be absent (unlabeled data). Empty
/// cells are missing values. Row numbers in errors count data rows from 1.
pub fn read_dataset<R: Read>(
    reader: R,
    schema: &FeatureSchema,
    provenance: impl Into<String>,
) -> Result<Dataset, DatasetError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let map = HeaderMap::new(schema, &header)?;
    let mut rows = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(DatasetError::ColumnCount { row, expected: header.len(), found: record.len() });
        }
        let id = record[map.id].to_string();
        if id.is_empty() {
            return Err(DatasetError::EmptyId { row });
        }
        if !ids.insert(id.clone()) {
            return Err(DatasetError::DuplicateId { row, id });
        }
        let ts_text = &record[map.timestamp];
        let timestamp = parse_timestamp(ts_text)
            .ok_or_else(|| DatasetError::InvalidTimestamp { row, value: ts_text.to_string() })?;
        let label = match map.label.map(|p| &record[p]) {
            None | Some("") => None,
            Some(text) => Some(
                Label::parse(text)
                    .ok_or_else(|| DatasetError::InvalidLabel { row, value: text.to_string() })?,
            ),
        };
        let values = map
            .values
            .iter()
            .zip(schema.value_features())
            .map(|(pos, name)| match pos {
                Some(p) => parse_value(&record[*p], row, name),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let origin = read_origin(&map, &record, row)?;
        let sample = Sample { id, timestamp, values, label, origin };
        check_row(schema, &sample, row)?;
        rows.push(sample);
    }
    let mut data = Dataset::new(schema.clone(), rows, provenance)?;
    data.tracks_origin = map.source.is_some();
    Ok(data)
}

fn read_origin(
    map: &HeaderMap,
    record: &csv::StringRecord,
    row: usize,
) -> Result<Option<SimilarOrigin>, DatasetError> {
    let Some(source) = map.source.map(|p| &record[p]) else {
        return Ok(None);
    };
    let invalid = |column: &str, value: &str| DatasetError::InvalidProvenance {
        row,
        column: column.to_string(),
        value: value.to_string(),
    };
    match source {
        "real" => Ok(None),
        "similar" => {
            let vote_text = map.vote.map(|p| &record[p]).unwrap_or("");
            let vote = vote_text
                .parse::<f64>()
                .ok()
                .filter(|v| (-1.0..=1.0).contains(v))
                .ok_or_else(|| invalid(VOTE_COLUMN, vote_text))?;
            let count_text = map.matched_count.map(|p| &record[p]).unwrap_or("");
            let matched_count =
                count_text.parse::<usize>().map_err(|_| invalid(MATCHED_COUNT_COLUMN, count_text))?;
            Ok(Some(SimilarOrigin { vote, matched_count }))
        }
        other => Err(invalid(SOURCE_COLUMN, other)),
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_dataset(io::BufReader::new(file), schema, path.display().to_string())
}

/// Writes the dataset in the same layout [`read_dataset`] accepts: schema
/// columns in declared order, then provenance columns when tracked.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<(), DatasetError> {
    let schema = data.schema();
    let mut csv = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    if data.tracks_origin {
        header.extend(RESERVED);
    }
    csv.write_record(&header)?;
    for row in data.rows() {
        let mut record = Vec::with_capacity(header.len());
        for column in schema.columns() {
            record.push(match column.role {
                Role::Id => row.id.clone(),
                Role::Timestamp => format_timestamp(&row.timestamp),
                Role::Label => row.label.map(|l| l.to_string()).unwrap_or_default(),
                Role::Similarity | Role::EstimationOnly => {
                    let i = schema.value_index(&column.name).expect("value column");
                    format_value(row.values[i])
                }
            });
        }
        if data.tracks_origin {
            match &row.origin {
                None => record.extend(["real".to_string(), String::new(), String::new()]),
                Some(origin) => record.extend([
                    "similar".to_string(),
                    origin.vote.to_string(),
                    origin.matched_count.to_string(),
                ]),
            }
        }
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

/// Partitions rows at a holdout date `H`: the earliest timestamp such that
/// at least `ceil(test_fraction * N)` rows fall at or after it.
///
/// Rows tied at `H` all land in the test set, so the test set can exceed
/// the requested fraction. Row order is preserved on both sides.
pub fn time_holdout_split(
    data: &Dataset,
    test_fraction: f64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(DatasetError::Fraction(test_fraction));
    }
    if data.is_empty() {
        return Err(DatasetError::Empty);
    }
    let needed = ceil_count(test_fraction, data.len());
    let holdout = holdout_date(data, needed);
    let train_note = format!("{} | train before holdout", data.provenance);
    let test_note = format!("{} | test at or after holdout", data.provenance);
    let train = match holdout {
        Some(h) => data.filtered(train_note, |r| r.timestamp < h),
        None => data.filtered(train_note, |_| true),
    };
    let test = match holdout {
        Some(h) => data.filtered(test_note, |r| r.timestamp >= h),
        None => data.filtered(test_note, |_| false),
    };
    Ok((train, test))
}

/// Holdout date for a test set of at least `needed` rows; `None` when no
/// rows are needed.
pub fn holdout_date(data: &Dataset, needed: usize) -> Option<NaiveDateTime> {
    if needed == 0 {
        return None;
    }
    let mut counts: BTreeMap<NaiveDateTime, usize> = BTreeMap::new();
    for row in data.rows() {
        *counts.entry(row.timestamp).or_default() += 1;
    }
    let mut tail = 0;
    for (ts, count) in counts.iter().rev() {
        tail += count;
        if tail >= needed {
            return Some(*ts);
        }
    }
    counts.keys().next().copied()
}
