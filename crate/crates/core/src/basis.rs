//! Nonnegative basis functions for the continuous-feature estimator.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, TabularDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisFunction {
    /// `max(0, x_feature − offset + 1)`.
    Linear { feature: usize, offset: f64 },
    /// `1{x_feature = value}` for a 1-based discrete code.
    Indicator { feature: usize, value: usize },
}

impl BasisFunction {
    #[inline]
    pub fn eval(&self, x: ArrayView1<'_, f64>, _y: usize) -> f64 {
        match *self {
            BasisFunction::Linear { feature, offset } => (x[feature] - offset + 1.0).max(0.0),
            BasisFunction::Indicator { feature, value } => {
                if x[feature] == value as f64 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Feature columns the function reads.
    pub fn features(&self) -> Vec<usize> {
        match *self {
            BasisFunction::Linear { feature, .. } | BasisFunction::Indicator { feature, .. } => {
                vec![feature]
            }
        }
    }
}

/// `K` basis functions plus, per feature, the indices of the functions
/// that read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    functions: Vec<BasisFunction>,
    groups: Vec<Vec<usize>>,
}

impl BasisSet {
    pub fn new(functions: Vec<BasisFunction>, num_features: usize) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::InvalidConfig("basis set is empty".into()));
        }
        let mut groups = vec![Vec::new(); num_features];
        for (k, f) in functions.iter().enumerate() {
            for i in f.features() {
                if i >= num_features {
                    return Err(Error::InvalidConfig(format!(
                        "basis {k} reads feature {i} but there are {num_features}"
                    )));
                }
                groups[i].push(k);
            }
        }
        Ok(BasisSet { functions, groups })
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.groups.len()
    }

    /// Indices of the basis functions reading feature `i`.
    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// Linear bases for continuous columns (shifted by the fitting minimum so
/// they are nonnegative) and one indicator per category for discrete ones.
pub fn default_basis(ds: &TabularDataset) -> Result<BasisSet> {
    let schema = ds.schema();
    let mut functions = Vec::new();
    for (i, col) in schema.columns().iter().enumerate() {
        match col.kind {
            ColumnKind::Continuous => {
                let offset = ds
                    .rows()
                    .column(i)
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                let offset = if offset.is_finite() { offset } else { 0.0 };
                functions.push(BasisFunction::Linear { feature: i, offset });
            }
            ColumnKind::Discrete { cardinality } => {
                functions.extend(
                    (1..=cardinality).map(|value| BasisFunction::Indicator { feature: i, value }),
                );
            }
        }
    }
    BasisSet::new(functions, schema.num_features())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, FeatureSchema};
    use ndarray::array;

    #[test]
    fn mixed_schema_gets_three_bases() {
        let schema =
            FeatureSchema::new(vec![Column::continuous("x1"), Column::discrete("x2", 2)], 2)
                .unwrap();
        let ds = TabularDataset::new(schema, array![[0.5, 1.0], [-2.0, 2.0]]).unwrap();
        let b = default_basis(&ds).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.group(0), &[0]);
        assert_eq!(b.group(1), &[1, 2]);
        // linear basis is shifted to start at one
        assert_eq!(b.functions()[0].eval(ds.row(1), 1), 1.0);
        assert_eq!(b.functions()[0].eval(ds.row(0), 1), 3.5);
    }

    #[test]
    fn two_ternary_columns_get_six_indicators() {
        let schema = FeatureSchema::all_discrete(&[3, 3], 2).unwrap();
        let ds = TabularDataset::from_discrete_rows(schema, &[vec![1, 3]], None).unwrap();
        let b = default_basis(&ds).unwrap();
        assert_eq!(b.len(), 6);
        let vals: Vec<f64> = b.functions().iter().map(|f| f.eval(ds.row(0), 1)).collect();
        assert_eq!(vals, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn out_of_range_feature_rejected() {
        let f = vec![BasisFunction::Indicator { feature: 3, value: 1 }];
        assert!(BasisSet::new(f, 2).is_err());
    }
}
