//! Core domain types: feature schemas and tabular datasets.
//!
//! Discrete cells hold integer codes `1..=cardinality` stored as `f64`;
//! labels and predictions are 1-based class codes `1..=L`. Feature indices
//! are 0-based column positions.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the row sums of predicted probabilities.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Discrete { cardinality: usize },
    Continuous,
}

impl ColumnKind {
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            ColumnKind::Discrete { cardinality } => Some(*cardinality),
            ColumnKind::Continuous => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ColumnKind::Discrete { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    pub fn discrete(name: impl Into<String>, cardinality: usize) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Discrete { cardinality },
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }
}

/// Ordered column descriptions plus the number of label classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
    label_cardinality: usize,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>, label_cardinality: usize) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidSchema("schema has no feature columns".into()));
        }
        if label_cardinality < 2 {
            return Err(Error::InvalidSchema(format!(
                "label cardinality must be at least 2, got {label_cardinality}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for col in &columns {
            if col.name.is_empty() {
                return Err(Error::InvalidSchema("empty column name".into()));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
            if let ColumnKind::Discrete { cardinality } = col.kind {
                if cardinality < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "column {:?} has cardinality {cardinality} < 2",
                        col.name
                    )));
                }
            }
        }
        Ok(FeatureSchema {
            columns,
            label_cardinality,
        })
    }

    /// All-discrete schema with auto-generated names `x0, x1, ...`.
    pub fn all_discrete(cardinalities: &[usize], label_cardinality: usize) -> Result<Self> {
        let columns = cardinalities
            .iter()
            .enumerate()
            .map(|(i, &c)| Column::discrete(format!("x{i}"), c))
            .collect();
        FeatureSchema::new(columns, label_cardinality)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn num_features(&self) -> usize {
        self.columns.len()
    }

    pub fn label_cardinality(&self) -> usize {
        self.label_cardinality
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn is_all_discrete(&self) -> bool {
        self.columns.iter().all(|c| c.kind.is_discrete())
    }

    /// Cardinality of a discrete column, or `ContinuousAxis` otherwise.
    pub fn cardinality(&self, index: usize) -> Result<usize> {
        let col = self
            .columns
            .get(index)
            .ok_or_else(|| Error::MissingAxis(format!("feature {index}")))?;
        col.kind
            .cardinality()
            .ok_or_else(|| Error::ContinuousAxis(col.name.clone()))
    }

    pub(crate) fn with_columns(&self, columns: Vec<Column>) -> Result<Self> {
        FeatureSchema::new(columns, self.label_cardinality)
    }
}

/// A single invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CellOutOfRange { row: usize, column: String, value: f64 },
    NonFiniteCell { row: usize, column: String },
    LabelOutOfRange { row: usize, value: usize },
    PredictionOutOfRange { row: usize, value: usize },
    NegativeProbability { row: usize, class: usize },
    ProbabilityRowSum { row: usize, sum: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::CellOutOfRange { row, column, value } => {
                write!(f, "row {row}, column {column}: value {value} out of range")
            }
            Violation::NonFiniteCell { row, column } => {
                write!(f, "row {row}, column {column}: non-finite value")
            }
            Violation::LabelOutOfRange { row, value } => {
                write!(f, "row {row}: label {value} out of range")
            }
            Violation::PredictionOutOfRange { row, value } => {
                write!(f, "row {row}: prediction {value} out of range")
            }
            Violation::NegativeProbability { row, class } => {
                write!(f, "row {row}: negative probability for class {class}")
            }
            Violation::ProbabilityRowSum { row, sum } => {
                write!(f, "row {row}: probabilities sum to {sum}")
            }
        }
    }
}

/// Feature matrix plus optional labels, hard predictions and predicted
/// class probabilities. Immutable once built; the `with_*` methods return
/// new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    schema: FeatureSchema,
    rows: Array2<f64>,
    labels: Option<Vec<usize>>,
    predictions: Option<Vec<usize>>,
    pred_probs: Option<Array2<f64>>,
}

impl TabularDataset {
    /// Builds a dataset, checking only shapes. Use [`validate_dataset`] or
    /// [`TabularDataset::validated`] to check value ranges.
    pub fn new(schema: FeatureSchema, rows: Array2<f64>) -> Result<Self> {
        if rows.ncols() != schema.num_features() {
            return Err(Error::InvalidDataset(format!(
                "row width {} does not match schema width {}",
                rows.ncols(),
                schema.num_features()
            )));
        }
        Ok(TabularDataset {
            schema,
            rows,
            labels: None,
            predictions: None,
            pred_probs: None,
        })
    }

    /// Builds a discrete dataset from per-row integer codes.
    pub fn from_discrete_rows(
        schema: FeatureSchema,
        rows: &[Vec<usize>],
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let d = schema.num_features();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} values, expected {d}",
                    r.len()
                )));
            }
            flat.extend(r.iter().map(|&v| v as f64));
        }
        let arr = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::InvalidDataset(e.to_string()))?;
        let ds = TabularDataset::new(schema, arr)?;
        match labels {
            Some(l) => ds.with_labels(l),
            None => Ok(ds),
        }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn with_predictions(mut self, predictions: Vec<usize>) -> Result<Self> {
        if predictions.len() != self.len() {
            return Err(Error::InvalidDataset(format!(
                "{} predictions for {} rows",
                predictions.len(),
                self.len()
            )));
        }
        self.predictions = Some(predictions);
        Ok(self)
    }

    pub fn with_pred_probs(mut self, probs: Array2<f64>) -> Result<Self> {
        if probs.nrows() != self.len() || probs.ncols() != self.schema.label_cardinality() {
            return Err(Error::InvalidDataset(format!(
                "probability matrix is {}x{}, expected {}x{}",
                probs.nrows(),
                probs.ncols(),
                self.len(),
                self.schema.label_cardinality()
            )));
        }
        self.pred_probs = Some(probs);
        Ok(self)
    }

    /// Returns the dataset if it has no violations, otherwise the first one.
    pub fn validated(self) -> Result<Self> {
        match validate_dataset(&self).into_iter().next() {
            None => Ok(self),
            Some(v) => Err(Error::InvalidDataset(v.to_string())),
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.schema.num_features()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn predictions(&self) -> Option<&[usize]> {
        self.predictions.as_deref()
    }

    pub fn pred_probs(&self) -> Option<&Array2<f64>> {
        self.pred_probs.as_ref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::MissingAxis("label".into()))
    }

    pub fn require_predictions(&self) -> Result<&[usize]> {
        self.predictions()
            .ok_or_else(|| Error::MissingAxis("prediction".into()))
    }

    pub fn require_pred_probs(&self) -> Result<&Array2<f64>> {
        self.pred_probs()
            .ok_or_else(|| Error::MissingAxis("predicted probabilities".into()))
    }

    /// Discrete code of cell `(row, col)` as a 1-based integer.
    #[inline]
    pub fn code(&self, row: usize, col: usize) -> usize {
        self.rows[[row, col]] as usize
    }

    /// Fraction of rows where the hard prediction equals the label.
    pub fn accuracy(&self) -> Result<f64> {
        let labels = self.require_labels()?;
        let preds = self.require_predictions()?;
        if labels.is_empty() {
            return Ok(0.0);
        }
        let correct = labels.iter().zip(preds).filter(|(y, f)| y == f).count();
        Ok(correct as f64 / labels.len() as f64)
    }

    /// Dataset restricted to the given row indices (rows may repeat).
    pub fn select_rows(&self, indices: &[usize]) -> TabularDataset {
        let rows = self.rows.select(ndarray::Axis(0), indices);
        let pick = |v: &Vec<usize>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        TabularDataset {
            schema: self.schema.clone(),
            rows,
            labels: self.labels.as_ref().map(pick),
            predictions: self.predictions.as_ref().map(pick),
            pred_probs: self
                .pred_probs
                .as_ref()
                .map(|p| p.select(ndarray::Axis(0), indices)),
        }
    }

    pub(crate) fn replace_features(&self, schema: FeatureSchema, rows: Array2<f64>) -> Self {
        TabularDataset {
            schema,
            rows,
            labels: self.labels.clone(),
            predictions: self.predictions.clone(),
            pred_probs: self.pred_probs.clone(),
        }
    }
}

/// Lists every invariant violation of `ds`; empty iff the dataset is valid.
pub fn validate_dataset(ds: &TabularDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let schema = ds.schema();
    for (i, row) in ds.rows().outer_iter().enumerate() {
        for (j, col) in schema.columns().iter().enumerate() {
            let v = row[j];
            if !v.is_finite() {
                out.push(Violation::NonFiniteCell {
                    row: i,
                    column: col.name.clone(),
                });
                continue;
            }
            if let ColumnKind::Discrete { cardinality } = col.kind {
                if v.fract() != 0.0 || v < 1.0 || v > cardinality as f64 {
                    out.push(Violation::CellOutOfRange {
                        row: i,
                        column: col.name.clone(),
                        value: v,
                    });
                }
            }
        }
    }
    let l = schema.label_cardinality();
    if let Some(labels) = ds.labels() {
        for (i, &y) in labels.iter().enumerate() {
            if y < 1 || y > l {
                out.push(Violation::LabelOutOfRange { row: i, value: y });
            }
        }
    }
    if let Some(preds) = ds.predictions() {
        for (i, &f) in preds.iter().enumerate() {
            if f < 1 || f > l {
                out.push(Violation::PredictionOutOfRange { row: i, value: f });
            }
        }
    }
    if let Some(probs) = ds.pred_probs() {
        for (i, row) in probs.outer_iter().enumerate() {
            if let Some(c) = row.iter().position(|&p| p < 0.0 || p.is_nan()) {
                out.push(Violation::NegativeProbability { row: i, class: c + 1 });
                continue;
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                out.push(Violation::ProbabilityRowSum { row: i, sum });
            }
        }
    }
    out
}

/// Succeeds iff the two schemas agree column by column and on `L`.
pub fn align_schemas(source: &TabularDataset, target: &TabularDataset) -> Result<()> {
    check_schemas(source.schema(), target.schema())
}

pub(crate) fn check_schemas(a: &FeatureSchema, b: &FeatureSchema) -> Result<()> {
    let n = a.num_features().max(b.num_features());
    for i in 0..n {
        match (a.columns().get(i), b.columns().get(i)) {
            (Some(x), Some(y)) if x == y => {}
            (Some(x), Some(y)) => {
                let reason = if x.name != y.name {
                    format!("name {:?} vs {:?}", x.name, y.name)
                } else {
                    format!("kind {:?} vs {:?}", x.kind, y.kind)
                };
                return Err(Error::SchemaMismatch {
                    column: format!("{i} ({})", x.name),
                    reason,
                });
            }
            (Some(x), None) => {
                return Err(Error::SchemaMismatch {
                    column: format!("{i} ({})", x.name),
                    reason: "missing from target".into(),
                })
            }
            (None, Some(y)) => {
                return Err(Error::SchemaMismatch {
                    column: format!("{i} ({})", y.name),
                    reason: "missing from source".into(),
                })
            }
            (None, None) => unreachable!(),
        }
    }
    if a.label_cardinality() != b.label_cardinality() {
        return Err(Error::SchemaMismatch {
            column: "label".into(),
            reason: format!(
                "cardinality {} vs {}",
                a.label_cardinality(),
                b.label_cardinality()
            ),
        });
    }
    Ok(())
}
