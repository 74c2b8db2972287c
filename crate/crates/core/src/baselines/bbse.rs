//! Black-box shift estimation.
//!
//! Under label shift `q(f) = Σ_y p(f | y) q(y) = Σ_y C[f, y] w(y)` with the
//! joint confusion `C[f, y] = p(f, y)` and `w(y) = q(y) / p(y)`, so the
//! label weights solve the `L × L` system `C w = μ`, `μ[f] = q(f)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::report::Diagnostics;
use crate::tabulate::{Axis, MarginalSource};
use crate::weights::{TableWeights, WeightFunction};

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct BbseFit {
    /// `C[f-1, y-1] = p(f, y)`.
    pub confusion: DMatrix<f64>,
    pub target_pred_marginal: Vec<f64>,
    pub class_weights: Vec<f64>,
    pub weights: WeightFunction,
    pub diagnostics: Diagnostics,
}

pub fn run_bbse<S, T>(source: &S, target: &T) -> Result<BbseFit>
where
    S: MarginalSource + ?Sized,
    T: MarginalSource + ?Sized,
{
    let l = source.label_cardinality();
    let joint = source.marginal(&[Axis::Prediction, Axis::Label])?;
    let mu = target.marginal(&[Axis::Prediction])?.masses().to_vec();
    if mu.len() != l {
        return Err(Error::SchemaMismatch {
            column: "prediction".into(),
            reason: format!("source has {l} classes, target {}", mu.len()),
        });
    }
    let confusion = DMatrix::from_row_slice(l, l, joint.masses());
    let sv = confusion.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularConfusion(cond));
    }
    let raw = confusion
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(&mu))
        .ok_or(Error::SingularConfusion(cond))?;

    let p_y: Vec<f64> = (0..l).map(|y| confusion.column(y).sum()).collect();
    let clipped: Vec<f64> = raw.iter().map(|&w| w.max(0.0)).collect();
    let mean: f64 = clipped.iter().zip(&p_y).map(|(w, p)| w * p).sum();
    if !(mean > 0.0) {
        return Err(Error::InvalidDataset(
            "label weights vanish after clipping".into(),
        ));
    }
    let class_weights: Vec<f64> = clipped.iter().map(|w| w / mean).collect();

    let mut diagnostics = Diagnostics::new();
    diagnostics.insert("condition_number".into(), cond);
    diagnostics.insert(
        "clipped_classes".into(),
        raw.iter().filter(|&&w| w < 0.0).count() as f64,
    );
    diagnostics.insert("mean_weight_before_normalization".into(), mean);

    Ok(BbseFit {
        weights: WeightFunction::Table(TableWeights::label_only(class_weights.clone())?),
        confusion,
        target_pred_marginal: mu,
        class_weights,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabulate::EmpiricalPmf;

    fn population(p_y: [f64; 2], recall: [f64; 2]) -> EmpiricalPmf {
        // axes (prediction, label); recall[y] = p(f = y | y)
        let mut m = vec![0.0; 4];
        for y in 0..2 {
            for f in 0..2 {
                let pf = if f == y { recall[y] } else { 1.0 - recall[y] };
                m[f * 2 + y] = p_y[y] * pf;
            }
        }
        EmpiricalPmf::from_mass(vec![Axis::Prediction, Axis::Label], vec![2, 2], m).unwrap()
    }

    #[test]
    fn recovers_label_ratios() {
        let p = population([0.5, 0.5], [0.8, 0.7]);
        let q = population([0.2, 0.8], [0.8, 0.7]);
        let fit = run_bbse(&p, &q).unwrap();
        assert!((fit.class_weights[0] - 0.4).abs() < 1e-12);
        assert!((fit.class_weights[1] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn no_shift_gives_unit_weights() {
        let p = population([0.3, 0.7], [0.9, 0.6]);
        let fit = run_bbse(&p, &p).unwrap();
        for w in fit.class_weights {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uninformative_classifier_is_singular() {
        let p = population([0.5, 0.5], [1.0, 0.0]);
        assert!(matches!(run_bbse(&p, &p), Err(Error::SingularConfusion(_))));
    }
}
