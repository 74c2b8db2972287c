//! Importance-weight representations `w(x, y) ≈ q(x, y) / p(x, y)`.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::baselines::dlu::DiscriminativeWeights;
use crate::baselines::kliep::KernelWeights;
use crate::basis::BasisSet;
use crate::data::TabularDataset;
use crate::error::{Error, Result};

/// Weight returned for `(x_J, y)` cells that carried no source mass.
pub const UNSEEN_WEIGHT: f64 = 1.0;

/// Lookup table over `(x_J, y)` for a sorted feature index set `J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableWeights {
    index_set: Vec<usize>,
    cards: Vec<usize>,
    label_cardinality: usize,
    weights: Vec<f64>,
    observed: Vec<bool>,
}

impl TableWeights {
    /// `weights` and `observed` are laid out with `x_J` codes major and the
    /// label fastest.
    pub fn new(
        index_set: Vec<usize>,
        cards: Vec<usize>,
        label_cardinality: usize,
        weights: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        if index_set.len() != cards.len() || !index_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "index set must be sorted, unique and match its cardinalities".into(),
            ));
        }
        let size = cards.iter().product::<usize>() * label_cardinality;
        if weights.len() != size || observed.len() != size {
            return Err(Error::InvalidConfig(format!(
                "weight table needs {size} cells, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        Ok(TableWeights {
            index_set,
            cards,
            label_cardinality,
            weights,
            observed,
        })
    }

    /// Label-only weights `w(y)`.
    pub fn label_only(weights: Vec<f64>) -> Result<Self> {
        let l = weights.len();
        TableWeights::new(vec![], vec![], l, weights, vec![true; l])
    }

    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn label_cardinality(&self) -> usize {
        self.label_cardinality
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    /// Number of `x_J` configurations.
    pub fn num_blocks(&self) -> usize {
        self.cards.iter().product()
    }

    fn offset(&self, codes: &[usize], y: usize) -> usize {
        let block = codes
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&c, &k)| acc * k + (c - 1));
        block * self.label_cardinality + (y - 1)
    }

    /// Stored weight at 1-based codes of `x_J` and label `y`, `None` if the
    /// cell was never observed.
    pub fn lookup(&self, codes: &[usize], y: usize) -> Option<f64> {
        let off = self.offset(codes, y);
        self.observed[off].then_some(self.weights[off])
    }

    /// Lookup with the neutral fallback for unseen cells.
    pub fn get(&self, codes: &[usize], y: usize) -> f64 {
        self.lookup(codes, y).unwrap_or(UNSEEN_WEIGHT)
    }

    pub(crate) fn lookup_row(&self, x: ArrayView1<'_, f64>, y: usize) -> Option<f64> {
        let codes: Vec<usize> = self.index_set.iter().map(|&j| x[j] as usize).collect();
        self.lookup(&codes, y)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for w in &mut self.weights {
            *w *= factor;
        }
        self
    }
}

/// Basis-expansion weights `w(x, y) = Σ_k a[k, y] φ_k(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisWeights {
    pub basis: BasisSet,
    /// `K × L` nonnegative coefficients.
    pub coefficients: Array2<f64>,
}

impl BasisWeights {
    pub fn weight(&self, x: ArrayView1<'_, f64>, y: usize) -> f64 {
        self.basis
            .functions()
            .iter()
            .enumerate()
            .map(|(k, phi)| self.coefficients[[k, y - 1]] * phi.eval(x, y))
            .sum()
    }
}

/// Weights that depend on the features only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateWeights {
    Kernel(KernelWeights),
    Discriminative(DiscriminativeWeights),
}

impl CovariateWeights {
    pub fn weight(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            CovariateWeights::Kernel(k) => k.weight(x),
            CovariateWeights::Discriminative(d) => d.weight(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightFunction {
    Table(TableWeights),
    Basis(BasisWeights),
    Covariate(CovariateWeights),
}

/// Weights evaluated on the rows of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEvaluation {
    pub values: Vec<f64>,
    /// Rows that fell in an unseen table cell and received [`UNSEEN_WEIGHT`].
    pub unseen: usize,
}

impl WeightEvaluation {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl WeightFunction {
    /// Whether the weight reads the label.
    pub fn uses_label(&self) -> bool {
        !matches!(self, WeightFunction::Covariate(_))
    }

    /// Weight at one point; `None` only for unseen table cells.
    pub fn lookup(&self, x: ArrayView1<'_, f64>, y: usize) -> Option<f64> {
        match self {
            WeightFunction::Table(t) => t.lookup_row(x, y),
            WeightFunction::Basis(b) => Some(b.weight(x, y)),
            WeightFunction::Covariate(c) => Some(c.weight(x)),
        }
    }

    pub fn weight(&self, x: ArrayView1<'_, f64>, y: usize) -> f64 {
        self.lookup(x, y).unwrap_or(UNSEEN_WEIGHT)
    }

    /// Evaluates on every row of `ds`; labels are required unless the weight
    /// is feature-only.
    pub fn evaluate(&self, ds: &TabularDataset) -> Result<WeightEvaluation> {
        let labels = if self.uses_label() {
            Some(ds.require_labels()?)
        } else {
            None
        };
        let mut unseen = 0;
        let values = (0..ds.len())
            .map(|i| {
                let y = labels.map_or(1, |l| l[i]);
                self.lookup(ds.row(i), y).unwrap_or_else(|| {
                    unseen += 1;
                    UNSEEN_WEIGHT
                })
            })
            .collect();
        Ok(WeightEvaluation { values, unseen })
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        match self {
            WeightFunction::Table(t) => WeightFunction::Table(t.scaled(factor)),
            WeightFunction::Basis(mut b) => {
                b.coefficients *= factor;
                WeightFunction::Basis(b)
            }
            WeightFunction::Covariate(CovariateWeights::Kernel(mut k)) => {
                k.scale *= factor;
                WeightFunction::Covariate(CovariateWeights::Kernel(k))
            }
            WeightFunction::Covariate(CovariateWeights::Discriminative(mut d)) => {
                d.scale *= factor;
                WeightFunction::Covariate(CovariateWeights::Discriminative(d))
            }
        }
    }

    /// Rescales so that the mean weight over the source rows is one.
    /// Returns the rescaled function and the mean before rescaling.
    pub fn normalized(self, source: &TabularDataset) -> Result<(Self, f64)> {
        let mean = self.evaluate(source)?.mean();
        if !(mean > 0.0) {
            return Err(Error::InvalidConfig(
                "weights vanish on the source sample; cannot normalize".into(),
            ));
        }
        Ok((self.scaled(1.0 / mean), mean))
    }
}
