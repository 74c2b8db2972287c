//! Shift simulation by conditional resampling of a labeled base sample.
//!
//! A target row is drawn by first drawing the cell `(x_I, y)` from the
//! requested marginal and then a base row from that cell uniformly with
//! replacement. The conditional `p(x_{I^c} | x_I, y)` is therefore the
//! base's, and the exact importance weight relative to the base is
//! `q(x_I, y) / p_base(x_I, y)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::estimator::GroundTruth;
use crate::tabulate::{estimate_pmf, Axis};
use crate::weights::TableWeights;

/// Target marginal over `(x_I, y)` for a sorted 0-based shifted set `I`.
/// `target_marginal` is laid out with `x_I` codes major and the label
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SjsSpec {
    pub shift_set: Vec<usize>,
    pub target_marginal: Vec<f64>,
}

impl SjsSpec {
    /// Checks the spec against the base's schema; returns the cardinalities
    /// of the shifted features.
    pub fn validate(&self, base: &TabularDataset) -> Result<Vec<usize>> {
        let schema = base.schema();
        let d = schema.num_features();
        if !self.shift_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("shift set must be sorted and unique".into()));
        }
        if self.shift_set.len() > d {
            return Err(Error::InvalidConfig(format!(
                "shift set has {} features but the base has {d}",
                self.shift_set.len()
            )));
        }
        if let Some(&i) = self.shift_set.iter().find(|&&i| i >= d) {
            return Err(Error::InvalidConfig(format!("shift feature {i} out of range (d = {d})")));
        }
        let cards: Vec<usize> = self
            .shift_set
            .iter()
            .map(|&i| schema.cardinality(i))
            .collect::<Result<_>>()?;
        let size = cards.iter().product::<usize>() * schema.label_cardinality();
        if self.target_marginal.len() != size {
            return Err(Error::InvalidConfig(format!(
                "target marginal has {} cells, expected {size}",
                self.target_marginal.len()
            )));
        }
        if self.target_marginal.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidConfig("target marginal has negative mass".into()));
        }
        let total: f64 = self.target_marginal.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("target marginal sums to {total}")));
        }
        Ok(cards)
    }
}

fn describe_cell(set: &[usize], cards: &[usize], l: usize, flat: usize) -> String {
    let y = flat % l + 1;
    let mut block = flat / l;
    let mut codes = vec![0; cards.len()];
    for k in (0..cards.len()).rev() {
        codes[k] = block % cards[k] + 1;
        block /= cards[k];
    }
    let parts: Vec<String> = set
        .iter()
        .zip(&codes)
        .map(|(i, c)| format!("x{i}={c}"))
        .chain(std::iter::once(format!("y={y}")))
        .collect();
    format!("({})", parts.join(", "))
}

/// Draws `n` target rows under the spec; returns the labeled sample and the
/// exact weights relative to the base.
pub fn apply_sjs(base: &TabularDataset, spec: &SjsSpec, n: usize, seed: u64) -> Result<(TabularDataset, GroundTruth)> {
    let cards = spec.validate(base)?;
    let labels = base.require_labels()?;
    let l = base.schema().label_cardinality();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.target_marginal.len()];
    for (i, &y) in labels.iter().enumerate() {
        let block = spec
            .shift_set
            .iter()
            .zip(&cards)
            .fold(0, |acc, (&f, &k)| acc * k + base.code(i, f) - 1);
        members[block * l + y - 1].push(i);
    }

    let mut weights = Vec::with_capacity(members.len());
    let mut observed = Vec::with_capacity(members.len());
    for (cell, rows) in members.iter().enumerate() {
        let q = spec.target_marginal[cell];
        if rows.is_empty() {
            if q > 0.0 {
                return Err(Error::EmptyCell(describe_cell(&spec.shift_set, &cards, l, cell)));
            }
            weights.push(1.0);
            observed.push(false);
        } else {
            weights.push(q / (rows.len() as f64 / base.len() as f64));
            observed.push(true);
        }
    }
    let truth = GroundTruth::new(TableWeights::new(
        spec.shift_set.clone(),
        cards,
        l,
        weights,
        observed,
    )?);

    let mut cdf = Vec::with_capacity(spec.target_marginal.len());
    let mut acc = 0.0;
    for &m in &spec.target_marginal {
        acc += m;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * acc;
        let mut cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        while members[cell].is_empty() || spec.target_marginal[cell] <= 0.0 {
            // only reachable through rounding at a zero-width cell
            cell = (cell + 1) % cdf.len();
        }
        let rows = &members[cell];
        picks.push(rows[rng.random_range(0..rows.len())]);
    }
    Ok((base.select_rows(&picks), truth))
}

/// Uniform draws with replacement; the reference sample for [`apply_sjs`].
pub fn resample_uniform(base: &TabularDataset, n: usize, seed: u64) -> Result<TabularDataset> {
    if base.is_empty() && n > 0 {
        return Err(Error::InvalidDataset("cannot resample an empty base".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..base.len())).collect();
    Ok(base.select_rows(&picks))
}

/// Label shift: only `p(y)` changes.
pub fn pure_label_shift(base: &TabularDataset, target_label_marginal: &[f64], n: usize, seed: u64) -> Result<(TabularDataset, GroundTruth)> {
    let spec = SjsSpec {
        shift_set: Vec::new(),
        target_marginal: target_label_marginal.to_vec(),
    };
    apply_sjs(base, &spec, n, seed)
}

/// Covariate shift on one feature: `q(x_i)` changes while `p(y | x_i)` and
/// the remaining conditionals are kept.
pub fn pure_covariate_shift(
    base: &TabularDataset,
    feature: usize,
    target_feature_marginal: &[f64],
    n: usize,
    seed: u64,
) -> Result<(TabularDataset, GroundTruth)> {
    if feature >= base.num_features() {
        return Err(Error::InvalidConfig(format!("feature {feature} out of range")));
    }
    let k = base.schema().cardinality(feature)?;
    if target_feature_marginal.len() != k {
        return Err(Error::InvalidConfig(format!(
            "feature marginal has {} cells, feature has {k} values",
            target_feature_marginal.len()
        )));
    }
    let l = base.schema().label_cardinality();
    let joint = estimate_pmf(base, &[Axis::Feature(feature), Axis::Label])?;
    let mut marginal = Vec::with_capacity(k * l);
    for (x, &qx) in target_feature_marginal.iter().enumerate() {
        let row = &joint.masses()[x * l..(x + 1) * l];
        let px: f64 = row.iter().sum();
        if px <= 0.0 {
            if qx > 0.0 {
                return Err(Error::EmptyCell(format!("(x{feature}={})", x + 1)));
            }
            marginal.extend(std::iter::repeat_n(0.0, l));
        } else {
            marginal.extend(row.iter().map(|p| qx * p / px));
        }
    }
    let spec = SjsSpec {
        shift_set: vec![feature],
        target_marginal: marginal,
    };
    apply_sjs(base, &spec, n, seed)
}
