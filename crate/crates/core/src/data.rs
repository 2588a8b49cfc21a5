//! Dataset ingestion and preprocessing: CSV loading under a named schema,
//! median imputation, min-max normalization, the product feature, and
//! seeded train/test splitting.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown label token '{token}'")]
    UnknownLabel { line: usize, token: String },
    #[error("dataset has no rows")]
    Empty,
    #[error("column '{column}' has no non-zero values among the fit rows; median undefined")]
    MedianUndefined { column: String },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("{0}")]
    Invalid(String),
}

/// Feature matrix with integer labels.
///
/// Rows are stored flat in row-major order. `norm_stats` holds the per-column
/// `(min, max)` pairs once [`normalize`] has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<i32>,
    column_names: Vec<String>,
    norm_stats: Option<Vec<(f64, f64)>>,
}

impl Dataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<i32>,
        column_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n_features = column_names.len();
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(DataError::Invalid(format!(
                    "row {i} has {} values, expected {n_features}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, labels, column_names)
    }

    pub fn from_flat(
        features: Vec<f64>,
        labels: Vec<i32>,
        column_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if labels.is_empty() {
            return Err(DataError::Empty);
        }
        let n_features = column_names.len();
        if features.len() != labels.len() * n_features {
            return Err(DataError::Invalid(format!(
                "{} feature values do not fill {} rows of {n_features} columns",
                features.len(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!(
                "non-finite feature value at row {}",
                pos / n_features.max(1)
            )));
        }
        Ok(Self {
            features,
            n_features,
            labels,
            column_names,
            norm_stats: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn norm_stats(&self) -> Option<&[(f64, f64)]> {
        self.norm_stats.as_deref()
    }

    /// Same columns with new labels, e.g. class indices remapped to region targets.
    pub fn with_labels(&self, labels: Vec<i32>) -> Result<Self, DataError> {
        if labels.len() != self.n_rows() {
            return Err(DataError::Invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n_rows()
            )));
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    /// Keeps only the listed feature columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self, DataError> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_features) {
            return Err(DataError::Invalid(format!(
                "column {bad} out of range for {} features",
                self.n_features
            )));
        }
        let features = self
            .rows()
            .flat_map(|r| columns.iter().map(move |&c| r[c]))
            .collect();
        let names = columns
            .iter()
            .map(|&c| self.column_names[c].clone())
            .collect();
        let stats = self
            .norm_stats
            .as_ref()
            .map(|s| columns.iter().map(|&c| s[c]).collect());
        Ok(Self {
            features,
            n_features: columns.len(),
            labels: self.labels.clone(),
            column_names: names,
            norm_stats: stats,
        })
    }

    /// Rows at `indices`, in that order. Normalization statistics are kept.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        if indices.is_empty() {
            return Err(DataError::Empty);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_rows()) {
            return Err(DataError::Invalid(format!("row index {bad} out of range")));
        }
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Ok(Self {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            column_names: self.column_names.clone(),
            norm_stats: self.norm_stats.clone(),
        })
    }

    /// Header of column names plus `label`, then one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = self.column_names.join(",");
        out.push_str(",label\n");
        for (row, label) in self.rows().zip(&self.labels) {
            for v in row {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{label}\n"));
        }
        out
    }
}

/// Named dataset layouts understood by [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaName {
    /// Iris restricted to setosa (0) and versicolor (1).
    Iris2Class,
    /// Iris with region targets: setosa +1, versicolor -1, virginica +1.
    Iris3ClassRegression,
    /// Iris with class indices 0, 1, 2.
    IrisMulticlass,
    /// Breast Cancer Wisconsin (Diagnostic): id, M/B, 30 features.
    Wdbc,
    /// PIMA Indians diabetes: 8 features then outcome 0/1.
    Pima,
    /// Any width; last column is an integer label.
    Generic,
}

impl SchemaName {
    pub const ALL: [SchemaName; 6] = [
        SchemaName::Iris2Class,
        SchemaName::Iris3ClassRegression,
        SchemaName::IrisMulticlass,
        SchemaName::Wdbc,
        SchemaName::Pima,
        SchemaName::Generic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemaName::Iris2Class => "iris-2class",
            SchemaName::Iris3ClassRegression => "iris-3class-regression",
            SchemaName::IrisMulticlass => "iris-multiclass",
            SchemaName::Wdbc => "wdbc",
            SchemaName::Pima => "pima",
            SchemaName::Generic => "generic",
        }
    }
}

impl fmt::Display for SchemaName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemaName {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| DataError::Invalid(format!("unknown schema '{s}'")))
    }
}

/// How missing values are encoded and repaired.
#[derive(Debug, Clone, PartialEq)]
pub enum MissingPolicy {
    None,
    /// Zeros in these feature columns are missing; replaced by the median of
    /// the non-zero fit values.
    ZeroAsMissing {
        columns: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub name: SchemaName,
    /// Raw row width; `None` accepts whatever width the first row has.
    pub width: Option<usize>,
    /// Position of the label in the raw row; `None` means the last column.
    pub label_column: Option<usize>,
    /// Raw token → label. Empty means labels are parsed as integers.
    pub label_mapping: Vec<(String, i32)>,
    /// Rows carrying these label tokens are skipped.
    pub excluded_labels: Vec<String>,
    pub dropped_columns: Vec<usize>,
    pub feature_names: Vec<String>,
    pub missing_policy: MissingPolicy,
}

const IRIS_FEATURES: [&str; 4] = ["sepal_length", "sepal_width", "petal_length", "petal_width"];
const IRIS_CLASSES: [&str; 3] = ["Iris-setosa", "Iris-versicolor", "Iris-virginica"];
const PIMA_FEATURES: [&str; 8] = [
    "pregnancies",
    "glucose",
    "blood_pressure",
    "skin_thickness",
    "insulin",
    "bmi",
    "diabetes_pedigree",
    "age",
];
const WDBC_MEASURES: [&str; 10] = [
    "radius",
    "texture",
    "perimeter",
    "area",
    "smoothness",
    "compactness",
    "concavity",
    "concave_points",
    "symmetry",
    "fractal_dimension",
];

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn mapping(pairs: &[(&str, i32)]) -> Vec<(String, i32)> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl DatasetSchema {
    pub fn named(name: SchemaName) -> Self {
        let iris = |label_mapping, excluded_labels| Self {
            name,
            width: Some(5),
            label_column: Some(4),
            label_mapping,
            excluded_labels,
            dropped_columns: vec![],
            feature_names: names(&IRIS_FEATURES),
            missing_policy: MissingPolicy::None,
        };
        match name {
            SchemaName::Iris2Class => iris(
                mapping(&[(IRIS_CLASSES[0], 0), (IRIS_CLASSES[1], 1)]),
                vec![IRIS_CLASSES[2].to_string()],
            ),
            SchemaName::Iris3ClassRegression => iris(
                mapping(&[
                    (IRIS_CLASSES[0], 1),
                    (IRIS_CLASSES[1], -1),
                    (IRIS_CLASSES[2], 1),
                ]),
                vec![],
            ),
            SchemaName::IrisMulticlass => iris(
                mapping(&[
                    (IRIS_CLASSES[0], 0),
                    (IRIS_CLASSES[1], 1),
                    (IRIS_CLASSES[2], 2),
                ]),
                vec![],
            ),
            SchemaName::Wdbc => Self {
                name,
                width: Some(32),
                label_column: Some(1),
                label_mapping: mapping(&[("M", 1), ("B", 0)]),
                excluded_labels: vec![],
                dropped_columns: vec![0],
                feature_names: ["mean", "se", "worst"]
                    .iter()
                    .flat_map(|suffix| WDBC_MEASURES.iter().map(move |m| format!("{m}_{suffix}")))
                    .collect(),
                missing_policy: MissingPolicy::None,
            },
            SchemaName::Pima => Self {
                name,
                width: Some(9),
                label_column: Some(8),
                label_mapping: mapping(&[("0", 0), ("1", 1)]),
                excluded_labels: vec![],
                dropped_columns: vec![],
                feature_names: names(&PIMA_FEATURES),
                // glucose, blood_pressure, skin_thickness, insulin, bmi
                missing_policy: MissingPolicy::ZeroAsMissing {
                    columns: vec![1, 2, 3, 4, 5],
                },
            },
            SchemaName::Generic => Self {
                name,
                width: None,
                label_column: None,
                label_mapping: vec![],
                excluded_labels: vec![],
                dropped_columns: vec![],
                feature_names: vec![],
                missing_policy: MissingPolicy::None,
            },
        }
    }

    /// Number of distinct label values the mapping produces.
    pub fn class_count(&self) -> Option<usize> {
        if self.label_mapping.is_empty() {
            return None;
        }
        let distinct: HashSet<i32> = self.label_mapping.iter().map(|(_, v)| *v).collect();
        Some(distinct.len())
    }

    fn map_label(&self, token: &str, line: usize) -> Result<i32, DataError> {
        if self.label_mapping.is_empty() {
            return token.parse::<i32>().map_err(|_| DataError::UnknownLabel {
                line,
                token: token.to_string(),
            });
        }
        self.label_mapping
            .iter()
            .find(|(k, _)| k == token)
            .map(|(_, v)| *v)
            .ok_or_else(|| DataError::UnknownLabel {
                line,
                token: token.to_string(),
            })
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, schema)
}

/// Parses comma-separated text under `schema`.
///
/// A first row whose feature fields are not all numeric is taken as a header.
pub fn parse_csv(text: &str, schema: &DatasetSchema) -> Result<Dataset, DataError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let Some(&(first_line, first)) = lines.peek() else {
        return Err(DataError::Empty);
    };
    let first_fields: Vec<&str> = first.split(',').map(str::trim).collect();
    let width = schema.width.unwrap_or(first_fields.len());
    if width < 2 {
        return Err(DataError::Malformed {
            line: first_line,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let label_col = schema.label_column.unwrap_or(width - 1);
    let feature_cols: Vec<usize> = (0..width)
        .filter(|c| *c != label_col && !schema.dropped_columns.contains(c))
        .collect();

    let is_header = first_fields.len() == width
        && feature_cols
            .iter()
            .any(|&c| first_fields[c].parse::<f64>().is_err());
    let mut column_names = if !schema.feature_names.is_empty() {
        schema.feature_names.clone()
    } else {
        feature_cols.iter().map(|c| format!("col{c}")).collect()
    };
    if is_header {
        if schema.feature_names.is_empty() {
            column_names = feature_cols
                .iter()
                .map(|&c| first_fields[c].to_string())
                .collect();
        }
        lines.next();
    }
    if column_names.len() != feature_cols.len() {
        return Err(DataError::Invalid(format!(
            "schema {} names {} features but rows carry {}",
            schema.name,
            column_names.len(),
            feature_cols.len()
        )));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, text) in lines {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(DataError::Malformed {
                line,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let token = fields[label_col];
        if schema.excluded_labels.iter().any(|e| e == token) {
            continue;
        }
        let label = schema.map_label(token, line)?;
        for &c in &feature_cols {
            let v: f64 = fields[c].parse().map_err(|_| DataError::Malformed {
                line,
                message: format!("field {} is not a number: '{}'", c + 1, fields[c]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Malformed {
                    line,
                    message: format!("field {} is not finite", c + 1),
                });
            }
            features.push(v);
        }
        labels.push(label);
    }
    Dataset::from_flat(features, labels, column_names)
}

fn check_fit(data: &Dataset, fit_indices: &[usize]) -> Result<(), DataError> {
    if fit_indices.is_empty() {
        return Err(DataError::Invalid("fit index set is empty".into()));
    }
    if let Some(&bad) = fit_indices.iter().find(|&&i| i >= data.n_rows()) {
        return Err(DataError::Invalid(format!("fit index {bad} out of range")));
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Replaces values flagged missing by the schema's policy with the median of
/// the valid values among `fit_indices`.
pub fn impute_missing(
    data: &Dataset,
    schema: &DatasetSchema,
    fit_indices: &[usize],
) -> Result<Dataset, DataError> {
    check_fit(data, fit_indices)?;
    let MissingPolicy::ZeroAsMissing { columns } = &schema.missing_policy else {
        return Ok(data.clone());
    };
    let mut out = data.clone();
    let n = data.n_features;
    for &c in columns {
        if c >= n {
            return Err(DataError::Invalid(format!(
                "imputation column {c} out of range"
            )));
        }
        let mut valid: Vec<f64> = fit_indices
            .iter()
            .map(|&i| data.row(i)[c])
            .filter(|&v| v != 0.0)
            .collect();
        if valid.is_empty() {
            return Err(DataError::MedianUndefined {
                column: data.column_names[c].clone(),
            });
        }
        let fill = median(&mut valid);
        for i in 0..data.n_rows() {
            let v = &mut out.features[i * n + c];
            if *v == 0.0 {
                *v = fill;
            }
        }
    }
    Ok(out)
}

/// Min-max scales every column with statistics from `fit_indices` only.
///
/// Constant columns map to 0. Rows outside the fit set may land outside
/// `[0, 1]` and are left unclamped.
pub fn normalize(data: &Dataset, fit_indices: &[usize]) -> Result<Dataset, DataError> {
    check_fit(data, fit_indices)?;
    let n = data.n_features;
    let mut stats = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
    for &i in fit_indices {
        for (s, &v) in stats.iter_mut().zip(data.row(i)) {
            s.0 = s.0.min(v);
            s.1 = s.1.max(v);
        }
    }
    let mut out = data.clone();
    for row in out.features.chunks_mut(n.max(1)) {
        for (v, &(lo, hi)) in row.iter_mut().zip(&stats) {
            let span = hi - lo;
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }
    out.norm_stats = Some(stats);
    Ok(out)
}

/// Appends a `product` column holding the product of every existing feature.
pub fn append_product_feature(data: &Dataset) -> Dataset {
    let n = data.n_features;
    let mut features = Vec::with_capacity(data.n_rows() * (n + 1));
    for row in data.rows() {
        features.extend_from_slice(row);
        features.push(row.iter().product());
    }
    let mut column_names = data.column_names.clone();
    column_names.push("product".to_string());
    Dataset {
        features,
        n_features: n + 1,
        labels: data.labels.clone(),
        column_names,
        norm_stats: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

const SPLIT_STREAM: u64 = 2;

/// Seeded shuffle of `0..n`; the first `⌈n·(1 - test_fraction)⌉` indices
/// are the training rows.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(DataError::Split(format!(
            "test fraction must lie in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    if n < 2 {
        return Err(DataError::Split(format!("need at least 2 rows, got {n}")));
    }
    // The epsilon keeps exact products such as 10 × 0.8 from rounding up.
    let n_train = ((n as f64) * (1.0 - spec.test_fraction) - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DataError::Split(format!(
            "test fraction {} leaves an empty side for {n} rows",
            spec.test_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SPLIT_STREAM);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = split_indices(data.n_rows(), spec)?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}
