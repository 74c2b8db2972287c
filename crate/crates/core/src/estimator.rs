//! Accuracy-shift estimation from weights, feature selection and scoring
//! against ground truth.
//!
//! With 0-1 accuracy `ℓ(f, y) = 1{f = y}` the target accuracy is
//! `E_Q[ℓ] = E_P[w ℓ]`, so the change is estimated on the labeled source as
//!
//! ```text
//! Δ̂ = (1/n_P) Σ_i (w(x_i, y_i) − 1) · 1{f(x_i) = y_i}
//! ```
//!
//! Positive `Δ̂` means accuracy rises on the target.

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::report::WeightMetrics;
use crate::sees_c::feature_scores;
use crate::weights::{TableWeights, WeightFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Loss {
    #[default]
    ZeroOne,
}

/// Known shift used to score estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `w*(x_I, y)` over the true shifted set.
    pub true_weights: TableWeights,
    /// 0-based indices.
    pub true_shift_set: Vec<usize>,
    pub true_target_accuracy: Option<f64>,
    pub source_accuracy: Option<f64>,
}

impl GroundTruth {
    pub fn new(true_weights: TableWeights) -> Self {
        GroundTruth {
            true_shift_set: true_weights.index_set().to_vec(),
            true_weights,
            true_target_accuracy: None,
            source_accuracy: None,
        }
    }

    pub fn with_accuracies(mut self, source: f64, target: f64) -> Self {
        self.source_accuracy = Some(source);
        self.true_target_accuracy = Some(target);
        self
    }

    /// `target − source` accuracy.
    pub fn true_gap(&self) -> Result<f64> {
        match (self.true_target_accuracy, self.source_accuracy) {
            (Some(t), Some(s)) => Ok(t - s),
            _ => Err(Error::MissingTruth),
        }
    }

    pub fn as_weight_function(&self) -> WeightFunction {
        WeightFunction::Table(self.true_weights.clone())
    }
}

pub fn estimate_gap(source: &TabularDataset, w: &WeightFunction, loss: Loss) -> Result<f64> {
    let Loss::ZeroOne = loss;
    let labels = source.require_labels()?;
    let preds = source.require_predictions()?;
    if source.is_empty() {
        return Ok(0.0);
    }
    let ev = w.evaluate(source)?;
    let sum: f64 = ev
        .values
        .iter()
        .zip(labels.iter().zip(preds))
        .filter(|(_, (y, f))| y == f)
        .map(|(w, _)| w - 1.0)
        .sum();
    Ok(sum / source.len() as f64)
}

/// Indices of the `s` highest scores, ties to the lower index, returned
/// sorted.
pub fn top_features(scores: &[f64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(s);
    order.sort_unstable();
    order
}

/// Features the weight function attributes the shift to. Feature-only
/// baselines carry no selection and return an empty set.
pub fn select_features(w: &WeightFunction, s: usize) -> Vec<usize> {
    match w {
        WeightFunction::Table(t) => t.index_set().to_vec(),
        WeightFunction::Basis(b) => top_features(&feature_scores(&b.coefficients, &b.basis), s),
        WeightFunction::Covariate(_) => Vec::new(),
    }
}

/// Pearson correlation, or 0 with a warning when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        log::warn!("correlation undefined for a constant series; reporting 0");
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

pub fn score_weights(w: &WeightFunction, truth: &GroundTruth, eval_points: &TabularDataset) -> Result<WeightMetrics> {
    let est = w.evaluate(eval_points)?.values;
    let star = truth.as_weight_function().evaluate(eval_points)?.values;
    let mse = if est.is_empty() {
        0.0
    } else {
        est.iter().zip(&star).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / est.len() as f64
    };
    Ok(WeightMetrics {
        mse,
        pcc: pearson(&est, &star),
    })
}

/// Squared error of an estimated accuracy change.
pub fn score_gap(delta_hat: f64, truth: &GroundTruth) -> Result<f64> {
    Ok((delta_hat - truth.true_gap()?).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSchema;

    fn two_rows() -> TabularDataset {
        let schema = FeatureSchema::all_discrete(&[2], 2).unwrap();
        TabularDataset::from_discrete_rows(schema, &[vec![1], vec![2]], Some(vec![1, 1]))
            .unwrap()
            .with_predictions(vec![1, 2])
            .unwrap()
    }

    #[test]
    fn hand_computed_gap() {
        let w = TableWeights::new(vec![0], vec![2], 2, vec![3.0, 1.0, 0.5, 1.0], vec![true; 4]).unwrap();
        let d = estimate_gap(&two_rows(), &WeightFunction::Table(w), Loss::ZeroOne).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn unit_weights_give_zero_gap() {
        let w = WeightFunction::Table(TableWeights::label_only(vec![1.0, 1.0]).unwrap());
        assert_eq!(estimate_gap(&two_rows(), &w, Loss::ZeroOne).unwrap(), 0.0);
    }

    #[test]
    fn tie_rule_prefers_lower_index() {
        assert_eq!(top_features(&[0.0, 5.0, 5.0, 1.0], 2), vec![1, 2]);
        assert_eq!(top_features(&[2.0; 4], 1), vec![0]);
        assert_eq!(top_features(&[1.0, 3.0, 2.0], 5), vec![0, 1, 2]);
    }

    #[test]
    fn gap_score_matches_arithmetic() {
        let w = TableWeights::label_only(vec![1.0, 1.0]).unwrap();
        let truth = GroundTruth::new(w).with_accuracies(0.9, 0.9 + 0.155);
        assert!((score_gap(0.167, &truth).unwrap() - 0.000144).abs() < 1e-12);
        let no_acc = GroundTruth::new(TableWeights::label_only(vec![1.0, 1.0]).unwrap());
        assert!(matches!(score_gap(0.1, &no_acc), Err(Error::MissingTruth)));
    }

    #[test]
    fn constant_estimate_has_zero_correlation() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[0.5, 1.0, 2.0]), 0.0);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
    }
}
