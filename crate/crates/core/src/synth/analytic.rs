//! Exact joint distributions over discrete features and a label, held as
//! rationals so that conditional probabilities can be checked exactly.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::estimator::GroundTruth;
use crate::tabulate::{Axis, EmpiricalPmf};
use crate::weights::TableWeights;

pub type Rational = Ratio<i128>;

/// Shorthand for `num / den`.
pub fn rat(num: i128, den: i128) -> Rational {
    Rational::new(num, den)
}

fn to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Iterates 1-based code tuples in row-major order, last position fastest.
fn for_each_code(cards: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = cards.iter().product();
    let mut codes = vec![1usize; cards.len()];
    for _ in 0..total {
        f(&codes);
        for k in (0..codes.len()).rev() {
            codes[k] += 1;
            if codes[k] <= cards[k] {
                break;
            }
            codes[k] = 1;
        }
    }
}

fn flat_offset(codes: &[usize], cards: &[usize]) -> usize {
    codes
        .iter()
        .zip(cards)
        .fold(0, |acc, (&c, &k)| acc * k + (c - 1))
}

/// Joint pmf over `(x, y)`; the table is laid out with feature codes in
/// row-major order and the label fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDistribution {
    schema: FeatureSchema,
    cards: Vec<usize>,
    joint: Vec<Rational>,
}

impl AnalyticDistribution {
    pub fn new(schema: FeatureSchema, joint: Vec<Rational>) -> Result<Self> {
        if !schema.is_all_discrete() {
            return Err(Error::InvalidSchema("analytic distributions are discrete".into()));
        }
        let cards: Vec<usize> = (0..schema.num_features())
            .map(|i| schema.cardinality(i))
            .collect::<Result<_>>()?;
        let size = cards.iter().product::<usize>() * schema.label_cardinality();
        if joint.len() != size {
            return Err(Error::InvalidDataset(format!(
                "joint table has {} cells, schema needs {size}",
                joint.len()
            )));
        }
        if joint.iter().any(|p| *p < Rational::from(0)) {
            return Err(Error::InvalidDataset("negative probability".into()));
        }
        let total: Rational = joint.iter().sum();
        if total != Rational::from(1) {
            return Err(Error::InvalidDataset(format!("joint sums to {total}")));
        }
        Ok(AnalyticDistribution {
            schema,
            cards,
            joint,
        })
    }

    /// Builds the table from a function of 1-based feature codes and label.
    pub fn from_fn(schema: FeatureSchema, mut p: impl FnMut(&[usize], usize) -> Rational) -> Result<Self> {
        let cards: Vec<usize> = (0..schema.num_features())
            .map(|i| schema.cardinality(i))
            .collect::<Result<_>>()?;
        let l = schema.label_cardinality();
        let mut joint = Vec::new();
        for_each_code(&cards, |codes| {
            for y in 1..=l {
                joint.push(p(codes, y));
            }
        });
        AnalyticDistribution::new(schema, joint)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn prob(&self, codes: &[usize], y: usize) -> Rational {
        let l = self.schema.label_cardinality();
        self.joint[flat_offset(codes, &self.cards) * l + y - 1]
    }

    pub fn total_mass(&self) -> Rational {
        self.joint.iter().sum()
    }

    /// `p(y | x)`; zero when `x` has no mass.
    pub fn label_given(&self, codes: &[usize], y: usize) -> Rational {
        let l = self.schema.label_cardinality();
        let px: Rational = (1..=l).map(|c| self.prob(codes, c)).sum();
        if px == Rational::from(0) {
            return px;
        }
        self.prob(codes, y) / px
    }

    /// Marginal over `(x_S, y)` for sorted 0-based `features`, laid out
    /// with `x_S` codes major and the label fastest.
    pub fn marginal(&self, features: &[usize]) -> Vec<Rational> {
        let l = self.schema.label_cardinality();
        let sub: Vec<usize> = features.iter().map(|&i| self.cards[i]).collect();
        let mut out = vec![Rational::from(0); sub.iter().product::<usize>() * l];
        let mut i = 0;
        for_each_code(&self.cards, |codes| {
            let s: Vec<usize> = features.iter().map(|&f| codes[f]).collect();
            let base = flat_offset(&s, &sub) * l;
            for y in 0..l {
                out[base + y] += self.joint[i];
                i += 1;
            }
        });
        out
    }

    /// Population table over `(x_1..x_d, y)`.
    pub fn to_pmf(&self) -> EmpiricalPmf {
        let mut axes: Vec<Axis> = (0..self.cards.len()).map(Axis::Feature).collect();
        axes.push(Axis::Label);
        let mut cards = self.cards.clone();
        cards.push(self.schema.label_cardinality());
        EmpiricalPmf::from_mass(axes, cards, self.joint.iter().map(to_f64).collect())
            .expect("validated joint")
    }

    /// Population table over `(x_1..x_d, f, y)` for a deterministic
    /// classifier `f` of the 1-based feature codes.
    pub fn with_predictor(&self, f: impl Fn(&[usize]) -> usize) -> Result<EmpiricalPmf> {
        let l = self.schema.label_cardinality();
        let mut axes: Vec<Axis> = (0..self.cards.len()).map(Axis::Feature).collect();
        axes.extend([Axis::Prediction, Axis::Label]);
        let mut cards = self.cards.clone();
        cards.extend([l, l]);
        let mut mass = Vec::with_capacity(self.joint.len() * l);
        let mut i = 0;
        let mut bad = None;
        for_each_code(&self.cards, |codes| {
            let pred = f(codes);
            if pred < 1 || pred > l {
                bad = Some(pred);
            }
            for fbar in 1..=l {
                for y in 0..l {
                    let p = if fbar == pred { to_f64(&self.joint[i + y]) } else { 0.0 };
                    mass.push(p);
                }
            }
            i += l;
        });
        if let Some(p) = bad {
            return Err(Error::InvalidConfig(format!("classifier returned class {p}")));
        }
        EmpiricalPmf::from_mass(axes, cards, mass)
    }

    /// Exact accuracy of a deterministic classifier.
    pub fn accuracy(&self, f: impl Fn(&[usize]) -> usize) -> Rational {
        let mut acc = Rational::from(0);
        for_each_code(&self.cards, |codes| acc += self.prob(codes, f(codes)));
        acc
    }
}

/// `w*(x_S, y) = q(x_S, y) / p(x_S, y)` as a weight table; cells without
/// source mass are left unobserved.
pub fn marginal_ratio(source: &AnalyticDistribution, target: &AnalyticDistribution, features: &[usize]) -> Result<TableWeights> {
    let p = source.marginal(features);
    let q = target.marginal(features);
    let zero = Rational::from(0);
    let mut weights = Vec::with_capacity(p.len());
    let mut observed = Vec::with_capacity(p.len());
    for (pi, qi) in p.iter().zip(&q) {
        if *pi == zero {
            if *qi != zero {
                return Err(Error::InvalidDataset("target mass outside the source support".into()));
            }
            weights.push(1.0);
            observed.push(false);
        } else {
            weights.push(to_f64(&(qi / pi)));
            observed.push(true);
        }
    }
    let cards = features.iter().map(|&i| source.cards[i]).collect();
    TableWeights::new(
        features.to_vec(),
        cards,
        source.schema.label_cardinality(),
        weights,
        observed,
    )
}

/// The two-feature pair whose shift involves the first feature jointly
/// with the label while leaving the second feature's class conditionals
/// intact. It is neither label shift nor covariate shift.
///
/// Source: `Y ~ Bern(0.5)`; given `Y = 0`, `X1 ~ Bern(0.7)`, `X2 ~ Bern(0.6)`;
/// given `Y = 1`, `X1 ~ Bern(0.1)`, `X2 ~ Bern(0.2)`. Target: `Y ~ Bern(0.6)`
/// with `X1 ~ Bern(0.5)` for both classes and the same `X2` conditionals.
/// Binary values 0/1 are stored as codes 1/2, labels 0/1 as classes 1/2.
pub fn two_feature_fixture() -> (AnalyticDistribution, AnalyticDistribution, GroundTruth) {
    let schema = FeatureSchema::all_discrete(&[2, 2], 2).expect("valid schema");
    let bern = |p: Rational, code: usize| if code == 2 { p } else { Rational::from(1) - p };
    let make = |prior: Rational, x1: [Rational; 2], x2: [Rational; 2]| {
        AnalyticDistribution::from_fn(schema.clone(), |c, y| {
            bern(prior, y) * bern(x1[y - 1], c[0]) * bern(x2[y - 1], c[1])
        })
        .expect("probabilities sum to one")
    };
    let source = make(rat(1, 2), [rat(7, 10), rat(1, 10)], [rat(6, 10), rat(2, 10)]);
    let target = make(rat(6, 10), [rat(1, 2), rat(1, 2)], [rat(6, 10), rat(2, 10)]);
    let w = marginal_ratio(&source, &target, &[0]).expect("full support");
    (source, target, GroundTruth::new(w))
}

/// i.i.d. rows by inverse CDF over the flattened table.
pub fn sample_analytic(dist: &AnalyticDistribution, n: usize, seed: u64, with_labels: bool) -> TabularDataset {
    let l = dist.schema.label_cardinality();
    let mut cdf = Vec::with_capacity(dist.joint.len());
    let mut acc = 0.0;
    for p in &dist.joint {
        acc += to_f64(p);
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dist.cards.len();
    let mut cell_codes: Vec<Vec<usize>> = Vec::with_capacity(dist.joint.len() / l);
    for_each_code(&dist.cards, |c| cell_codes.push(c.to_vec()));
    let mut flat = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        // skip zero-mass cells that rounding could land on
        let idx = (idx..cdf.len())
            .find(|&i| to_f64(&dist.joint[i]) > 0.0)
            .unwrap_or(idx);
        flat.extend(cell_codes[idx / l].iter().map(|&c| c as f64));
        labels.push(idx % l + 1);
    }
    let rows = ndarray::Array2::from_shape_vec((n, d), flat).expect("shape");
    let ds = TabularDataset::new(dist.schema.clone(), rows).expect("schema width");
    if with_labels {
        ds.with_labels(labels).expect("one label per row")
    } else {
        ds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_conditionals_are_exact() {
        let (p, q, truth) = two_feature_fixture();
        assert_eq!(q.label_given(&[2, 2], 2), rat(1, 3));
        assert_eq!(p.label_given(&[2, 2], 2), rat(1, 22));
        assert_eq!(p.total_mass(), Rational::from(1));
        assert_eq!(q.total_mass(), Rational::from(1));
        assert_eq!(truth.true_shift_set, vec![0]);
        // w*(x1 = 1, y = 1) = (0.6 * 0.5) / (0.5 * 0.1)
        assert!((truth.true_weights.get(&[2], 2) - 6.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let (p, _, _) = two_feature_fixture();
        let a = sample_analytic(&p, 50, 7, true);
        assert_eq!(a, sample_analytic(&p, 50, 7, true));
        assert_eq!(sample_analytic(&p, 1, 1, false).len(), 1);
        assert!(sample_analytic(&p, 1, 1, false).labels().is_none());
    }

    #[test]
    fn predictor_table_has_accuracy_on_diagonal() {
        let (p, _, _) = two_feature_fixture();
        let stump = |c: &[usize]| c[1];
        let pmf = p.with_predictor(stump).unwrap();
        let diag = pmf.marginalize(&[Axis::Prediction, Axis::Label]).unwrap();
        let acc = diag.get(&[1, 1]) + diag.get(&[2, 2]);
        assert!((acc - to_f64(&p.accuracy(stump))).abs() < 1e-15);
    }
}
