//! File formats: schema documents, CSV datasets, truth files and reports.
//!
//! A schema document lists every feature column with its kind, and for
//! discrete columns (and the label) the category strings in code order:
//!
//! ```json
//! {
//!   "columns": [
//!     {"name": "aged", "kind": "discrete", "categories": ["0", "1"]},
//!     {"name": "income", "kind": "continuous"}
//!   ],
//!   "label": {"name": "diagnosis", "categories": ["neg", "pos"]}
//! }
//! ```
//!
//! Category `k` in the list (0-based) is stored as code `k + 1`, so source
//! and target files share one encoding. Empty cells are rejected.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::estimator::GroundTruth;
use crate::report::ShiftReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnSpec {
    Discrete { name: String, categories: Vec<String> },
    Continuous { name: String },
}

impl ColumnSpec {
    pub fn name(&self) -> &str {
        match self {
            ColumnSpec::Discrete { name, .. } | ColumnSpec::Continuous { name } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub columns: Vec<ColumnSpec>,
    pub label: LabelSpec,
}

fn default_categories(k: usize) -> Vec<String> {
    (0..k).map(|c| c.to_string()).collect()
}

impl SchemaFile {
    /// Category strings `"0"`, `"1"`, ... for every discrete column and the
    /// label.
    pub fn from_schema(schema: &FeatureSchema, label_name: &str) -> Self {
        let columns = schema
            .columns()
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Discrete { cardinality } => ColumnSpec::Discrete {
                    name: c.name.clone(),
                    categories: default_categories(cardinality),
                },
                ColumnKind::Continuous => ColumnSpec::Continuous { name: c.name.clone() },
            })
            .collect();
        SchemaFile {
            columns,
            label: LabelSpec {
                name: label_name.to_string(),
                categories: default_categories(schema.label_cardinality()),
            },
        }
    }

    pub fn feature_schema(&self) -> Result<FeatureSchema> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            columns.push(match c {
                ColumnSpec::Discrete { name, categories } => {
                    let mut seen = std::collections::HashSet::new();
                    if let Some(dup) = categories.iter().find(|s| !seen.insert(s.as_str())) {
                        return Err(Error::InvalidSchema(format!(
                            "column {name} lists category {dup:?} twice"
                        )));
                    }
                    Column::discrete(name.clone(), categories.len())
                }
                ColumnSpec::Continuous { name } => Column::continuous(name.clone()),
            });
        }
        if self.columns.iter().any(|c| c.name() == self.label.name) {
            return Err(Error::InvalidSchema(format!(
                "label {} is also a feature column",
                self.label.name
            )));
        }
        FeatureSchema::new(columns, self.label.categories.len())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_schema(path: &Path) -> Result<SchemaFile> {
    let s: SchemaFile = read_json(path)?;
    s.feature_schema()?;
    Ok(s)
}

/// Reads a CSV with a header row. Every schema column must be present;
/// the label column is read when present. Other columns are ignored.
pub fn read_dataset(path: &Path, schema: &SchemaFile) -> Result<TabularDataset> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let fs = schema.feature_schema()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut positions = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        let p = find(c.name()).ok_or_else(|| Error::SchemaMismatch {
            column: c.name().to_string(),
            reason: format!("missing from {}", path.display()),
        })?;
        positions.push(p);
    }
    let label_pos = find(&schema.label.name);
    let dicts: Vec<Option<HashMap<&str, usize>>> = schema
        .columns
        .iter()
        .map(|c| match c {
            ColumnSpec::Discrete { categories, .. } => Some(
                categories
                    .iter()
                    .enumerate()
                    .map(|(k, s)| (s.as_str(), k + 1))
                    .collect(),
            ),
            ColumnSpec::Continuous { .. } => None,
        })
        .collect();
    let label_dict: HashMap<&str, usize> = schema
        .label
        .categories
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_str(), k + 1))
        .collect();

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| Error::MalformedRow { line, reason };
        for ((c, &p), dict) in schema.columns.iter().zip(&positions).zip(&dicts) {
            let raw = rec.get(p).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(bad(format!("missing value in column {}", c.name())));
            }
            let v = match dict {
                Some(d) => *d
                    .get(raw)
                    .ok_or_else(|| bad(format!("unknown category {raw:?} in column {}", c.name())))?
                    as f64,
                None => {
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| bad(format!("{raw:?} in column {} is not a number", c.name())))?;
                    if !v.is_finite() {
                        return Err(bad(format!("non-finite value in column {}", c.name())));
                    }
                    v
                }
            };
            flat.push(v);
        }
        if let Some(p) = label_pos {
            let raw = rec.get(p).unwrap_or("").trim();
            let y = label_dict
                .get(raw)
                .ok_or_else(|| bad(format!("unknown label {raw:?}")))?;
            labels.push(*y);
        }
        n += 1;
    }
    let rows = ndarray::Array2::from_shape_vec((n, fs.num_features()), flat).expect("shape");
    let ds = TabularDataset::new(fs, rows)?;
    if label_pos.is_some() {
        ds.with_labels(labels)
    } else {
        Ok(ds)
    }
}

/// Writes features (and labels when present) using the schema's category
/// strings. Continuous values use the shortest representation that reads
/// back to the same `f64`.
pub fn write_dataset(path: &Path, ds: &TabularDataset, schema: &SchemaFile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = schema.columns.iter().map(ColumnSpec::name).collect();
    let labels = ds.labels();
    if labels.is_some() {
        header.push(&schema.label.name);
    }
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        record.clear();
        for (j, c) in schema.columns.iter().enumerate() {
            let v = ds.rows()[[i, j]];
            record.push(match c {
                ColumnSpec::Discrete { categories, .. } => categories[v as usize - 1].clone(),
                ColumnSpec::Continuous { .. } => format!("{v}"),
            });
        }
        if let Some(l) = labels {
            record.push(schema.label.categories[l[i] - 1].clone());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// One readable truth cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    /// Category of each shifted feature, in shift-set order.
    pub features: Vec<String>,
    pub label: String,
    pub weight: f64,
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub shift_set: Vec<usize>,
    pub shift_feature_names: Vec<String>,
    pub source_accuracy: Option<f64>,
    pub true_target_accuracy: Option<f64>,
    pub true_delta: Option<f64>,
    pub cells: Vec<TruthCell>,
    pub truth: GroundTruth,
}

impl TruthFile {
    pub fn new(truth: &GroundTruth, schema: &SchemaFile) -> Self {
        let w = &truth.true_weights;
        let cats: Vec<&[String]> = w
            .index_set()
            .iter()
            .map(|&i| match &schema.columns[i] {
                ColumnSpec::Discrete { categories, .. } => categories.as_slice(),
                ColumnSpec::Continuous { .. } => &[],
            })
            .collect();
        let l = w.label_cardinality();
        let mut cells = Vec::with_capacity(w.values().len());
        for (flat, (&v, &seen)) in w.values().iter().zip(w.observed()).enumerate() {
            let mut block = flat / l;
            let mut codes = vec![0; cats.len()];
            for k in (0..cats.len()).rev() {
                let card = w.cardinalities()[k];
                codes[k] = block % card;
                block /= card;
            }
            cells.push(TruthCell {
                features: codes
                    .iter()
                    .zip(&cats)
                    .map(|(&c, names)| names.get(c).cloned().unwrap_or_else(|| (c + 1).to_string()))
                    .collect(),
                label: schema.label.categories[flat % l].clone(),
                weight: v,
                observed: seen,
            });
        }
        TruthFile {
            shift_set: truth.true_shift_set.clone(),
            shift_feature_names: truth
                .true_shift_set
                .iter()
                .map(|&i| schema.columns[i].name().to_string())
                .collect(),
            source_accuracy: truth.source_accuracy,
            true_target_accuracy: truth.true_target_accuracy,
            true_delta: truth.true_gap().ok(),
            cells,
            truth: truth.clone(),
        }
    }
}

/// Reports as written by the estimate command: one object, or an array
/// when several methods ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportDocument {
    Single(ShiftReport),
    Many(Vec<ShiftReport>),
}

impl ReportDocument {
    pub fn reports(&self) -> &[ShiftReport] {
        match self {
            ReportDocument::Single(r) => std::slice::from_ref(r),
            ReportDocument::Many(v) => v,
        }
    }
}

/// Reads a report file and checks every report's invariants.
pub fn read_reports(path: &Path) -> Result<Vec<ShiftReport>> {
    let doc: ReportDocument = read_json(path)?;
    for r in doc.reports() {
        r.validate()?;
    }
    Ok(doc.reports().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> SchemaFile {
        SchemaFile {
            columns: vec![
                ColumnSpec::Discrete {
                    name: "color".into(),
                    categories: vec!["red".into(), "blue".into()],
                },
                ColumnSpec::Continuous { name: "size".into() },
            ],
            label: LabelSpec {
                name: "y".into(),
                categories: vec!["no".into(), "yes".into()],
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "size,color,y,extra\n0.1,red,no,a\n2.5e-7,blue,yes,b\n").unwrap();
        let ds = read_dataset(&path, &schema()).unwrap();
        assert_eq!(ds.rows()[[0, 0]], 1.0);
        assert_eq!(ds.rows()[[1, 1]], 2.5e-7);
        assert_eq!(ds.labels().unwrap(), &[1, 2]);
        let out = dir.path().join("o.csv");
        write_dataset(&out, &ds, &schema()).unwrap();
        let back = read_dataset(&out, &schema()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn unknown_category_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "color,size\nred,1\ngreen,2\n").unwrap();
        assert!(matches!(
            read_dataset(&path, &schema()),
            Err(Error::MalformedRow { line: 3, .. })
        ));
    }

    #[test]
    fn missing_value_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "color,size\nred,\n").unwrap();
        assert!(matches!(
            read_dataset(&path, &schema()),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            read_dataset(Path::new("/nonexistent/x.csv"), &schema()),
            Err(Error::FileNotFound(_))
        ));
    }

    #[test]
    fn schema_json_shape() {
        let text = serde_json::to_string(&schema()).unwrap();
        assert!(text.contains(r#""kind":"discrete""#));
        let back: SchemaFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, schema());
    }
}
