//! Empirical probability mass tables over subsets of discrete columns, the
//! hard prediction and the label.
//!
//! Tables are dense and stored row-major with the last axis varying
//! fastest. Tables built from samples keep their integer counts so that
//! marginalizing reproduces the counts of a direct tabulation exactly.

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};

/// Largest table [`estimate_pmf`] will materialize.
pub const MAX_CELLS: usize = 10_000_000;

/// Tolerance on the total mass of a table.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    /// 0-based feature column.
    Feature(usize),
    Prediction,
    Label,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Feature(i) => write!(f, "feature {i}"),
            Axis::Prediction => f.write_str("prediction"),
            Axis::Label => f.write_str("label"),
        }
    }
}

/// Normalized probability table over an ordered list of axes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPmf {
    axes: Vec<Axis>,
    cards: Vec<usize>,
    mass: Vec<f64>,
    counts: Option<Vec<u64>>,
    sample_count: usize,
}

impl EmpiricalPmf {
    /// Builds a table from exact masses (population mode).
    pub fn from_mass(axes: Vec<Axis>, cards: Vec<usize>, mass: Vec<f64>) -> Result<Self> {
        check_axes(&axes, &cards)?;
        let size = table_size(&cards)?;
        if mass.len() != size {
            return Err(Error::InvalidDataset(format!(
                "mass table has {} entries, axes need {size}",
                mass.len()
            )));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidDataset("negative or non-finite mass".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDataset(format!("masses sum to {total}")));
        }
        Ok(EmpiricalPmf {
            axes,
            cards,
            mass,
            counts: None,
            sample_count: 0,
        })
    }

    fn from_counts(axes: Vec<Axis>, cards: Vec<usize>, counts: Vec<u64>, n: usize) -> Self {
        let mass = counts.iter().map(|&c| c as f64 / n as f64).collect();
        EmpiricalPmf {
            axes,
            cards,
            mass,
            counts: Some(counts),
            sample_count: n,
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    /// Number of rows tabulated; 0 for population tables.
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn position(&self, axis: Axis) -> Option<usize> {
        self.axes.iter().position(|&a| a == axis)
    }

    /// Flat offset of 0-based cell coordinates.
    #[inline]
    pub fn offset(&self, cell: &[usize]) -> usize {
        debug_assert_eq!(cell.len(), self.cards.len());
        cell.iter()
            .zip(&self.cards)
            .fold(0, |acc, (&c, &k)| acc * k + c)
    }

    /// Mass at 1-based codes, one per axis.
    pub fn get(&self, codes: &[usize]) -> f64 {
        let cell: Vec<usize> = codes.iter().map(|&c| c - 1).collect();
        self.mass[self.offset(&cell)]
    }

    /// Visits every cell with its 0-based coordinates and mass.
    pub fn for_each_cell(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut cell = vec![0usize; self.cards.len()];
        for &m in &self.mass {
            f(&cell, m);
            for k in (0..cell.len()).rev() {
                cell[k] += 1;
                if cell[k] < self.cards[k] {
                    break;
                }
                cell[k] = 0;
            }
        }
    }

    /// Sums out every axis not in `keep`, returning axes in `keep` order.
    pub fn marginalize(&self, keep: &[Axis]) -> Result<EmpiricalPmf> {
        let pos: Vec<usize> = keep
            .iter()
            .map(|&a| self.position(a).ok_or_else(|| Error::MissingAxis(a.to_string())))
            .collect::<Result<_>>()?;
        let cards: Vec<usize> = pos.iter().map(|&p| self.cards[p]).collect();
        let size = table_size(&cards)?;
        let target_offset = |cell: &[usize]| {
            pos.iter()
                .zip(&cards)
                .fold(0, |acc, (&p, &k)| acc * k + cell[p])
        };
        match &self.counts {
            Some(counts) => {
                let mut out = vec![0u64; size];
                let mut i = 0;
                self.for_each_cell(|cell, _| {
                    out[target_offset(cell)] += counts[i];
                    i += 1;
                });
                Ok(EmpiricalPmf::from_counts(
                    keep.to_vec(),
                    cards,
                    out,
                    self.sample_count,
                ))
            }
            None => {
                let mut out = vec![0.0; size];
                self.for_each_cell(|cell, m| out[target_offset(cell)] += m);
                Ok(EmpiricalPmf {
                    axes: keep.to_vec(),
                    cards,
                    mass: out,
                    counts: None,
                    sample_count: 0,
                })
            }
        }
    }
}

fn check_axes(axes: &[Axis], cards: &[usize]) -> Result<()> {
    if axes.len() != cards.len() {
        return Err(Error::InvalidDataset(
            "axis and cardinality lists differ in length".into(),
        ));
    }
    for (i, a) in axes.iter().enumerate() {
        if axes[..i].contains(a) {
            return Err(Error::InvalidConfig(format!("axis {a} repeated")));
        }
    }
    if cards.contains(&0) {
        return Err(Error::InvalidDataset("zero cardinality axis".into()));
    }
    Ok(())
}

fn table_size(cards: &[usize]) -> Result<usize> {
    let mut size: usize = 1;
    for &c in cards {
        size = size
            .checked_mul(c)
            .filter(|&s| s <= MAX_CELLS)
            .ok_or(Error::TableTooLarge(usize::MAX))?;
    }
    Ok(size)
}

/// Cardinality of `axis` in `ds`, checking availability.
pub fn axis_cardinality(ds: &TabularDataset, axis: Axis) -> Result<usize> {
    match axis {
        Axis::Feature(i) => ds.schema().cardinality(i),
        Axis::Prediction => ds
            .require_predictions()
            .map(|_| ds.schema().label_cardinality()),
        Axis::Label => ds.require_labels().map(|_| ds.schema().label_cardinality()),
    }
}

/// Tabulates the joint empirical mass of `axes` over the rows of `ds`.
pub fn estimate_pmf(ds: &TabularDataset, axes: &[Axis]) -> Result<EmpiricalPmf> {
    let cards = axes
        .iter()
        .map(|&a| axis_cardinality(ds, a))
        .collect::<Result<Vec<_>>>()?;
    check_axes(axes, &cards)?;
    let size = table_size(&cards)?;
    if ds.is_empty() {
        return Err(Error::InvalidDataset("cannot tabulate an empty dataset".into()));
    }
    let labels = ds.labels();
    let preds = ds.predictions();
    let mut counts = vec![0u64; size];
    for r in 0..ds.len() {
        let mut off = 0usize;
        for (&a, &k) in axes.iter().zip(&cards) {
            let code = match a {
                Axis::Feature(j) => ds.code(r, j),
                Axis::Prediction => preds.expect("checked")[r],
                Axis::Label => labels.expect("checked")[r],
            };
            debug_assert!(code >= 1 && code <= k);
            off = off * k + (code - 1);
        }
        counts[off] += 1;
    }
    Ok(EmpiricalPmf::from_counts(axes.to_vec(), cards, counts, ds.len()))
}

/// [`estimate_pmf`] with additive smoothing: each cell receives `alpha`
/// pseudo-counts. `alpha = 0` reproduces the unsmoothed table.
pub fn estimate_pmf_smoothed(ds: &TabularDataset, axes: &[Axis], alpha: f64) -> Result<EmpiricalPmf> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!("smoothing alpha {alpha} < 0")));
    }
    let raw = estimate_pmf(ds, axes)?;
    if alpha == 0.0 {
        return Ok(raw);
    }
    let counts = raw.counts.as_ref().expect("sample table");
    let denom = raw.sample_count as f64 + alpha * raw.len() as f64;
    let mass = counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
    Ok(EmpiricalPmf {
        mass,
        counts: None,
        ..raw
    })
}

/// Anything that can answer marginal-mass queries: a sample or an exact
/// population table.
pub trait MarginalSource: Sync {
    fn num_features(&self) -> usize;
    fn label_cardinality(&self) -> usize;
    fn feature_cardinality(&self, feature: usize) -> Result<usize>;
    fn marginal(&self, axes: &[Axis]) -> Result<EmpiricalPmf>;
}

impl MarginalSource for TabularDataset {
    fn num_features(&self) -> usize {
        self.schema().num_features()
    }

    fn label_cardinality(&self) -> usize {
        self.schema().label_cardinality()
    }

    fn feature_cardinality(&self, feature: usize) -> Result<usize> {
        self.schema().cardinality(feature)
    }

    fn marginal(&self, axes: &[Axis]) -> Result<EmpiricalPmf> {
        estimate_pmf(self, axes)
    }
}

impl MarginalSource for EmpiricalPmf {
    fn num_features(&self) -> usize {
        self.axes
            .iter()
            .filter(|a| matches!(a, Axis::Feature(_)))
            .count()
    }

    fn label_cardinality(&self) -> usize {
        self.axes
            .iter()
            .zip(&self.cards)
            .find(|(a, _)| matches!(a, Axis::Label | Axis::Prediction))
            .map(|(_, &c)| c)
            .unwrap_or(0)
    }

    fn feature_cardinality(&self, feature: usize) -> Result<usize> {
        let p = self
            .position(Axis::Feature(feature))
            .ok_or_else(|| Error::MissingAxis(Axis::Feature(feature).to_string()))?;
        Ok(self.cards[p])
    }

    fn marginal(&self, axes: &[Axis]) -> Result<EmpiricalPmf> {
        self.marginalize(axes)
    }
}
