//! Ground-truth generators: exact fixture distributions, shift simulation
//! by resampling, and end-to-end simulated source/target pairs.

pub mod analytic;
pub mod bases;
pub mod resample;

pub use analytic::{marginal_ratio, rat, sample_analytic, two_feature_fixture, AnalyticDistribution, Rational};
pub use bases::{binary_base, covid_analog, COVID_FEATURES};
pub use resample::{apply_sjs, pure_covariate_shift, pure_label_shift, resample_uniform, SjsSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::estimator::GroundTruth;
use crate::predictor::{predict, train_logistic, DEFAULT_L2, DEFAULT_MAX_ITERS};

/// How the target is derived from the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shift {
    /// Sparse joint shift on `spec.shift_set`.
    Joint(SjsSpec),
    /// Only the label marginal changes.
    Label { marginal: Vec<f64> },
    /// One feature's marginal changes with `p(y | x_i)` kept.
    Covariate { feature: usize, marginal: Vec<f64> },
}

impl Shift {
    pub fn apply(&self, base: &TabularDataset, n: usize, seed: u64) -> Result<(TabularDataset, GroundTruth)> {
        match self {
            Shift::Joint(spec) => apply_sjs(base, spec, n, seed),
            Shift::Label { marginal } => pure_label_shift(base, marginal, n, seed),
            Shift::Covariate { feature, marginal } => pure_covariate_shift(base, *feature, marginal, n, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub base: AnalyticDistribution,
    pub shift: Shift,
}

/// A simulated pair with a classifier trained on the source.
#[derive(Debug, Clone)]
pub struct Trial {
    /// Labeled source with predictions and probabilities.
    pub source: TabularDataset,
    /// Unlabeled target with predictions and probabilities.
    pub target: TabularDataset,
    pub target_labels: Vec<usize>,
    /// Weights relative to the base sample, plus both accuracies.
    pub truth: GroundTruth,
}

/// Rows drawn from the base distribution per simulated pair, as a multiple
/// of the larger sample.
pub const BASE_FACTOR: usize = 4;

/// Draws a base sample, a uniform source and a shifted target, trains the
/// built-in classifier on the source and records both true accuracies.
pub fn simulate(scenario: &Scenario, n_source: usize, n_target: usize, seed: u64) -> Result<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_n = (BASE_FACTOR * n_source.max(n_target)).max(1000);
    let base = sample_analytic(&scenario.base, base_n, rng.random(), true);
    simulate_from_base(&base, &scenario.shift, n_source, n_target, rng.random())
}

/// Same as [`simulate`] with a given labeled base sample in place of a
/// draw from an exact distribution. Truth weights are relative to `base`.
pub fn simulate_from_base(
    base: &TabularDataset,
    shift: &Shift,
    n_source: usize,
    n_target: usize,
    seed: u64,
) -> Result<Trial> {
    base.require_labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = resample_uniform(base, n_source, rng.random())?;
    let (target, truth) = shift.apply(base, n_target, rng.random())?;
    label_and_predict(source, target, truth)
}

/// Trains on the source, predicts both samples and fills in accuracies.
pub fn label_and_predict(source: TabularDataset, target: TabularDataset, truth: GroundTruth) -> Result<Trial> {
    if source.is_empty() {
        return Err(Error::InvalidDataset("source sample is empty".into()));
    }
    let model = train_logistic(&source, DEFAULT_L2, DEFAULT_MAX_ITERS)?;
    let source = predict(&model, &source)?;
    let target = predict(&model, &target)?;
    let target_labels = target.require_labels()?.to_vec();
    let truth = truth.with_accuracies(source.accuracy()?, target.accuracy()?);
    Ok(Trial {
        source,
        target: target.without_labels(),
        target_labels,
        truth,
    })
}

/// Target marginal over `(x_S, y)` obtained by tilting the base marginal
/// with `tilt(codes, y)` and renormalizing.
pub fn tilted_spec(base: &AnalyticDistribution, features: &[usize], tilt: impl Fn(&[usize], usize) -> f64) -> SjsSpec {
    let l = base.schema().label_cardinality();
    let cards: Vec<usize> = features
        .iter()
        .map(|&i| base.schema().cardinality(i).expect("discrete"))
        .collect();
    let p = base.marginal(features);
    let mut q = Vec::with_capacity(p.len());
    for (cell, pi) in p.iter().enumerate() {
        let y = cell % l + 1;
        let mut block = cell / l;
        let mut codes = vec![0; cards.len()];
        for k in (0..cards.len()).rev() {
            codes[k] = block % cards[k] + 1;
            block /= cards[k];
        }
        q.push(*pi.numer() as f64 / *pi.denom() as f64 * tilt(&codes, y));
    }
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    SjsSpec {
        shift_set: features.to_vec(),
        target_marginal: q,
    }
}

/// The age-diagnosis shift: positive rate moves from 40% in both groups to
/// 80% among the aged and 50% among the young, with the age mix kept at
/// one half.
pub fn covid_scenario() -> Scenario {
    Scenario {
        base: covid_analog(),
        // (aged, y) with y fastest: young/neg, young/pos, aged/neg, aged/pos
        shift: Shift::Joint(SjsSpec {
            shift_set: vec![0],
            target_marginal: vec![0.25, 0.25, 0.1, 0.4],
        }),
    }
}

/// One feature shifted jointly with the label on the generic binary base;
/// the association between the feature and the label reverses.
pub fn one_sjs_scenario(d: usize, feature: usize) -> Scenario {
    let base = binary_base(d);
    let spec = tilted_spec(&base, &[feature], |c, y| if c[0] == y { 2.5 } else { 0.5 });
    Scenario {
        base,
        shift: Shift::Joint(spec),
    }
}

/// Three features shifted jointly with the label; the first carries most
/// of the shift.
pub fn three_sjs_scenario() -> Scenario {
    let base = binary_base(7);
    let spec = tilted_spec(&base, &[0, 1, 2], |c, y| {
        let strong = if c[0] == y { 3.0 } else { 0.5 };
        let mid = if c[1] == y { 1.6 } else { 0.8 };
        let weak = if c[2] == y { 1.3 } else { 0.9 };
        strong * mid * weak
    });
    Scenario {
        base,
        shift: Shift::Joint(spec),
    }
}

/// The three robustness shifts on the age-diagnosis base.
pub fn robustness_scenarios() -> Vec<(&'static str, Scenario)> {
    let base = covid_analog();
    vec![
        (
            "label",
            Scenario {
                base: base.clone(),
                shift: Shift::Label {
                    marginal: vec![0.35, 0.65],
                },
            },
        ),
        (
            "covariate",
            Scenario {
                base: base.clone(),
                shift: Shift::Covariate {
                    feature: 0,
                    marginal: vec![0.3, 0.7],
                },
            },
        ),
        (
            "joint",
            Scenario {
                base,
                shift: Shift::Joint(SjsSpec {
                    shift_set: vec![0],
                    target_marginal: vec![0.2, 0.1, 0.1, 0.6],
                }),
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covid_truth_weight_is_two() {
        let trial = simulate(&covid_scenario(), 10_000, 10_000, 3).unwrap();
        let w = trial.truth.true_weights.get(&[2], 2);
        assert!((w - 2.0).abs() < 0.1, "{w}");
        assert_eq!(trial.target.len(), 10_000);
        assert!(trial.target.labels().is_none());
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate(&one_sjs_scenario(4, 1), 500, 500, 11).unwrap();
        let b = simulate(&one_sjs_scenario(4, 1), 500, 500, 11).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target, b.target);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn tilt_of_one_is_identity() {
        let base = binary_base(3);
        let spec = tilted_spec(&base, &[1], |_, _| 1.0);
        let p = base.marginal(&[1]);
        for (q, p) in spec.target_marginal.iter().zip(p) {
            assert!((q - *p.numer() as f64 / *p.denom() as f64).abs() < 1e-15);
        }
    }
}
