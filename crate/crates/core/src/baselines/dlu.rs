//! Discriminative ratio estimation on the pooled sample.
//!
//! A classifier separating target rows (class 2) from source rows (class 1)
//! estimates `ρ(x) = P(target | x)`; Bayes' rule gives
//! `q(x) / p(x) = ρ / (1 − ρ) · n_P / n_Q`.

use ndarray::{concatenate, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{check_schemas, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::predictor::{train_logistic, LogisticModel, DEFAULT_L2, DEFAULT_MAX_ITERS};
use crate::report::Diagnostics;
use crate::weights::{CovariateWeights, WeightFunction};

/// Raw ratios are clipped to `[0, WEIGHT_CEILING]` before normalization.
pub const WEIGHT_CEILING: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativeWeights {
    model: LogisticModel,
    /// `n_P / n_Q`.
    prior_ratio: f64,
    pub scale: f64,
}

impl DiscriminativeWeights {
    pub fn weight(&self, x: ArrayView1<'_, f64>) -> f64 {
        let p = self.model.predict_proba_row(x);
        let odds = if p[0] > 0.0 { p[1] / p[0] } else { f64::INFINITY };
        self.scale * (odds * self.prior_ratio).clamp(0.0, WEIGHT_CEILING)
    }
}

#[derive(Debug, Clone)]
pub struct DluFit {
    pub weights: WeightFunction,
    pub diagnostics: Diagnostics,
}

pub fn run_dlu(source: &TabularDataset, target: &TabularDataset) -> Result<DluFit> {
    check_schemas(source.schema(), target.schema())?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidDataset("domain classifier needs nonempty samples".into()));
    }
    let schema = FeatureSchema::new(source.schema().columns().to_vec(), 2)?;
    let rows = concatenate(Axis(0), &[source.rows().view(), target.rows().view()])
        .expect("same width");
    let domain: Vec<usize> = std::iter::repeat_n(1, source.len())
        .chain(std::iter::repeat_n(2, target.len()))
        .collect();
    let pooled = TabularDataset::new(schema, rows)?.with_labels(domain)?;
    let model = train_logistic(&pooled, DEFAULT_L2, DEFAULT_MAX_ITERS)?;

    let mut diagnostics = Diagnostics::new();
    diagnostics.insert("classifier_iterations".into(), model.iterations as f64);
    diagnostics.insert("classifier_converged".into(), f64::from(u8::from(model.converged)));
    let w = DiscriminativeWeights {
        model,
        prior_ratio: source.len() as f64 / target.len() as f64,
        scale: 1.0,
    };
    let clipped = (0..source.len())
        .filter(|&i| w.weight(source.row(i)) >= WEIGHT_CEILING)
        .count();
    diagnostics.insert("clipped_rows".into(), clipped as f64);
    let (weights, mean) = WeightFunction::Covariate(CovariateWeights::Discriminative(w)).normalized(source)?;
    diagnostics.insert("mean_weight_before_normalization".into(), mean);
    Ok(DluFit {
        weights,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: &[(usize, usize)]) -> TabularDataset {
        let schema = FeatureSchema::all_discrete(&[2], 2).unwrap();
        let mut out = Vec::new();
        for &(code, count) in rows {
            out.extend(std::iter::repeat_n(vec![code], count));
        }
        TabularDataset::from_discrete_rows(schema, &out, None).unwrap()
    }

    #[test]
    fn identical_samples_give_unit_weights() {
        let s = sample(&[(1, 300), (2, 700)]);
        let fit = run_dlu(&s, &s).unwrap();
        let ev = fit.weights.evaluate(&s).unwrap();
        for w in ev.values {
            assert!((w - 1.0).abs() < 1e-3, "{w}");
        }
    }

    #[test]
    fn recovers_discrete_ratio() {
        // p(x=2) = 0.5, q(x=2) = 0.8 -> w(2) = 1.6, w(1) = 0.4
        let s = sample(&[(1, 500), (2, 500)]);
        let t = sample(&[(1, 200), (2, 800)]);
        let fit = run_dlu(&s, &t).unwrap();
        let w1 = fit.weights.weight(ndarray::arr1(&[1.0]).view(), 1);
        let w2 = fit.weights.weight(ndarray::arr1(&[2.0]).view(), 1);
        assert!((w1 - 0.4).abs() < 1e-2 && (w2 - 1.6).abs() < 1e-2, "{w1} {w2}");
    }
}
