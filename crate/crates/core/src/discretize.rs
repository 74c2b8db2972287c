//! Equal-frequency binning of continuous columns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{check_schemas, Column, ColumnKind, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 5;

/// Fitted bin edges for every continuous column of a schema.
///
/// Each edge vector has `bins + 1` strictly increasing entries; the first and
/// last are the fitting sample's minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    bins: usize,
    edges: BTreeMap<usize, Vec<f64>>,
    input: FeatureSchema,
    output: FeatureSchema,
}

impl Discretizer {
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Edges of a continuous column, `None` for discrete ones.
    pub fn edges(&self, column: usize) -> Option<&[f64]> {
        self.edges.get(&column).map(Vec::as_slice)
    }

    pub fn has_edges(&self) -> bool {
        !self.edges.is_empty()
    }

    pub fn output_schema(&self) -> &FeatureSchema {
        &self.output
    }

    /// Bin code of `value` for `column`: one plus the number of interior
    /// edges not exceeding the value, clamped to `1..=bins`.
    pub fn bin_of(&self, column: usize, value: f64) -> usize {
        let edges = &self.edges[&column];
        let interior = &edges[1..edges.len() - 1];
        let below = interior.partition_point(|&e| e <= value);
        (1 + below).clamp(1, self.bins)
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|b| quantile(sorted, b as f64 / bins as f64))
        .collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Fits equal-frequency edges for every continuous column of `ds`.
pub fn fit_discretizer(ds: &TabularDataset, bins: usize) -> Result<Discretizer> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!("bin count {bins} < 2")));
    }
    let schema = ds.schema();
    let mut edges = BTreeMap::new();
    let mut out_cols = Vec::with_capacity(schema.num_features());
    for (j, col) in schema.columns().iter().enumerate() {
        match col.kind {
            ColumnKind::Discrete { .. } => out_cols.push(col.clone()),
            ColumnKind::Continuous => {
                let mut values: Vec<f64> = ds.rows().column(j).to_vec();
                values.sort_by(f64::total_cmp);
                let mut distinct = values.clone();
                distinct.dedup();
                if distinct.len() < bins {
                    return Err(Error::TooFewDistinctValues {
                        column: col.name.clone(),
                        bins,
                    });
                }
                let mut e = quantile_edges(&values, bins);
                if !strictly_increasing(&e) {
                    // heavy ties: fall back to quantiles of the distinct values
                    e = quantile_edges(&distinct, bins);
                }
                debug_assert!(strictly_increasing(&e));
                edges.insert(j, e);
                out_cols.push(Column::discrete(col.name.clone(), bins));
            }
        }
    }
    Ok(Discretizer {
        bins,
        edges,
        input: schema.clone(),
        output: schema.with_columns(out_cols)?,
    })
}

/// Replaces continuous columns by their bin codes.
///
/// Datasets already in the output schema are returned unchanged, so the
/// transform is idempotent.
pub fn apply_discretizer(disc: &Discretizer, ds: &TabularDataset) -> Result<TabularDataset> {
    if ds.schema() == &disc.output {
        return Ok(ds.clone());
    }
    check_schemas(&disc.input, ds.schema())?;
    let mut rows = ds.rows().clone();
    for &j in disc.edges.keys() {
        for v in rows.column_mut(j).iter_mut() {
            *v = disc.bin_of(j, *v) as f64;
        }
    }
    Ok(ds.replace_features(disc.output.clone(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn one_continuous(values: &[f64]) -> TabularDataset {
        let schema = FeatureSchema::new(vec![Column::continuous("v")], 2).unwrap();
        let rows = Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap();
        TabularDataset::new(schema, rows).unwrap()
    }

    #[test]
    fn uniform_grid_edges_are_percentiles() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let disc = fit_discretizer(&one_continuous(&values), 5).unwrap();
        let e = disc.edges(0).unwrap();
        // type-7 percentiles of 1..=100
        let expected = [1.0, 20.8, 40.6, 60.4, 80.2, 100.0];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
        let out = apply_discretizer(&disc, &one_continuous(&values)).unwrap();
        let mut per_bin = [0; 5];
        for r in 0..out.len() {
            per_bin[out.code(r, 0) - 1] += 1;
        }
        assert_eq!(per_bin, [20; 5]);
    }

    #[test]
    fn discrete_only_has_no_edges() {
        let schema = FeatureSchema::all_discrete(&[2, 3], 2).unwrap();
        let ds = TabularDataset::from_discrete_rows(schema, &[vec![1, 2]], None).unwrap();
        let disc = fit_discretizer(&ds, 5).unwrap();
        assert!(!disc.has_edges());
        assert_eq!(apply_discretizer(&disc, &ds).unwrap(), ds);
    }

    #[test]
    fn constant_column_is_rejected() {
        let err = fit_discretizer(&one_continuous(&[3.0; 10]), 2).unwrap_err();
        assert!(matches!(err, Error::TooFewDistinctValues { .. }));
    }

    #[test]
    fn clamping_and_ties() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let disc = fit_discretizer(&one_continuous(&values), 5).unwrap();
        assert_eq!(disc.bin_of(0, -50.0), 1);
        assert_eq!(disc.bin_of(0, 1e9), 5);
        assert_eq!(disc.bin_of(0, 20.8), 2);
        assert_eq!(disc.bin_of(0, 20.799), 1);
    }

    #[test]
    fn idempotent_on_output() {
        let values: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let ds = one_continuous(&values);
        let disc = fit_discretizer(&ds, 4).unwrap();
        let once = apply_discretizer(&disc, &ds).unwrap();
        let twice = apply_discretizer(&disc, &once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn heavy_ties_still_give_increasing_edges() {
        let mut values = vec![0.0; 90];
        values.extend((1..=10).map(f64::from));
        let disc = fit_discretizer(&one_continuous(&values), 4).unwrap();
        let e = disc.edges(0).unwrap();
        assert!(e.windows(2).all(|w| w[0] < w[1]), "{e:?}");
    }
}
