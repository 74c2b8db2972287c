//! Basis-expansion density matching with a group-sparsity penalty.
//!
//! The weight is `w(x, y) = Σ_k a[k, y] φ_k(x, y)` with `a ≥ 0`. Given the
//! source classifier's `p̂(y | x)`, the induced target feature density is
//! `Σ_y p̂(y | x) w(x, y) · p(x)`, so maximizing
//!
//! ```text
//! (1/n_Q) Σ_target log Σ_y p̂(y|x) Σ_k a[k,y] φ_k(x,y)  −  η Σ_i ‖a[e_i, :]‖₂
//! ```
//!
//! subject to `(1/n_P) Σ_source Σ_k a[k,y_i] φ_k(x_i,y_i) = 1` minimizes the
//! KL divergence from the target feature density while the group norm over
//! each feature's bases `e_i` pushes whole features out of the weight.
//! The feasible set is the nonnegative orthant cut by one hyperplane with a
//! nonnegative normal, so plain projected ascent applies.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::optim::{project_nonneg_hyperplane, projected_ascent, AscentOptions};
use crate::report::Diagnostics;
use crate::weights::{BasisWeights, WeightFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltySign {
    /// Penalize the group norm (induces sparsity).
    Subtract,
    /// Reward the group norm, for experiments with the literal sign.
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeesCConfig {
    pub eta: f64,
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub prob_floor: f64,
    pub penalty_sign: PenaltySign,
}

impl Default for SeesCConfig {
    fn default() -> Self {
        SeesCConfig {
            eta: 1e-3,
            step_size: 0.1,
            max_iters: 5000,
            tol: 1e-9,
            prob_floor: 1e-8,
            penalty_sign: PenaltySign::Subtract,
        }
    }
}

impl SeesCConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!("eta {} < 0", self.eta)));
        }
        if !(self.step_size > 0.0) || !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidConfig(
                "step size, tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor <= 1e-2) {
            return Err(Error::InvalidConfig(format!(
                "probability floor {} outside (0, 1e-2]",
                self.prob_floor
            )));
        }
        Ok(())
    }
}

/// Precomputed sufficient statistics of the objective. Coefficients are
/// flattened as `k * L + (y - 1)`.
#[derive(Debug, Clone)]
pub struct SeesCProblem {
    num_bases: usize,
    num_labels: usize,
    /// Distinct target rows: `c[k,y] = p̂(y|x) φ_k(x,y)` and the row share.
    target_terms: Vec<(Vec<f64>, f64)>,
    /// `m[k,y] = (1/n_P) Σ_{i: y_i = y} φ_k(x_i, y)`.
    constraint: Vec<f64>,
    groups: Vec<Vec<usize>>,
    cfg: SeesCConfig,
}

impl SeesCProblem {
    pub fn new(
        source: &TabularDataset,
        target: &TabularDataset,
        basis: &BasisSet,
        cfg: &SeesCConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let labels = source.require_labels()?;
        let probs = target.require_pred_probs()?;
        if source.is_empty() || target.is_empty() {
            return Err(Error::InvalidDataset("empty source or target sample".into()));
        }
        let kk = basis.len();
        let l = source.schema().label_cardinality();
        let dim = kk * l;

        let mut constraint = vec![0.0; dim];
        for (i, &y) in labels.iter().enumerate() {
            let x = source.row(i);
            for (k, phi) in basis.functions().iter().enumerate() {
                constraint[k * l + y - 1] += phi.eval(x, y);
            }
        }
        let n_p = source.len() as f64;
        constraint.iter_mut().for_each(|m| *m /= n_p);

        let n_q = target.len() as f64;
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut target_terms: Vec<(Vec<f64>, f64)> = Vec::new();
        for j in 0..target.len() {
            let x = target.row(j);
            let mut c = vec![0.0; dim];
            for (k, phi) in basis.functions().iter().enumerate() {
                for y in 1..=l {
                    c[k * l + y - 1] = probs[[j, y - 1]] * phi.eval(x, y);
                }
            }
            let key: Vec<u64> = c.iter().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&t) => target_terms[t].1 += 1.0 / n_q,
                None => {
                    index.insert(key, target_terms.len());
                    target_terms.push((c, 1.0 / n_q));
                }
            }
        }

        let groups = basis
            .groups()
            .iter()
            .map(|g| {
                g.iter()
                    .flat_map(|&k| (0..l).map(move |y| k * l + y))
                    .collect()
            })
            .collect();
        Ok(SeesCProblem {
            num_bases: kk,
            num_labels: l,
            target_terms,
            constraint,
            groups,
            cfg: *cfg,
        })
    }

    pub fn dim(&self) -> usize {
        self.num_bases * self.num_labels
    }

    pub fn constraint(&self) -> &[f64] {
        &self.constraint
    }

    /// `E_P[w] − 1` for flattened coefficients.
    pub fn constraint_residual(&self, a: &[f64]) -> f64 {
        a.iter().zip(&self.constraint).map(|(x, m)| x * m).sum::<f64>() - 1.0
    }

    pub fn likelihood(&self, a: &[f64]) -> f64 {
        self.target_terms
            .iter()
            .map(|(c, share)| {
                let z: f64 = c.iter().zip(a).map(|(x, y)| x * y).sum();
                share * z.max(self.cfg.prob_floor).ln()
            })
            .sum()
    }

    pub fn group_norms(&self, a: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| a[i] * a[i]).sum::<f64>().sqrt())
            .collect()
    }

    fn penalty_factor(&self) -> f64 {
        match self.cfg.penalty_sign {
            PenaltySign::Subtract => -self.cfg.eta,
            PenaltySign::Add => self.cfg.eta,
        }
    }

    /// Objective value and its analytic gradient. Rows whose induced
    /// density sits at the floor contribute no gradient; groups that are
    /// exactly zero take the zero subgradient.
    pub fn value_and_gradient(&self, a: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; a.len()];
        let mut value = 0.0;
        for (c, share) in &self.target_terms {
            let z: f64 = c.iter().zip(a).map(|(x, y)| x * y).sum();
            if z > self.cfg.prob_floor {
                value += share * z.ln();
                let s = share / z;
                for (g, ci) in grad.iter_mut().zip(c) {
                    *g += s * ci;
                }
            } else {
                value += share * self.cfg.prob_floor.ln();
            }
        }
        let factor = self.penalty_factor();
        if factor != 0.0 {
            for g in &self.groups {
                let norm = g.iter().map(|&i| a[i] * a[i]).sum::<f64>().sqrt();
                value += factor * norm;
                if norm > 0.0 {
                    for &i in g {
                        grad[i] += factor * a[i] / norm;
                    }
                }
            }
        }
        (value, grad)
    }

    /// Coefficients giving `w ≡ const`, rescaled onto the constraint.
    /// Coefficients whose constraint entry is zero never see source mass
    /// and are held at zero.
    pub fn initial_point(&self) -> Vec<f64> {
        let a: Vec<f64> = self
            .constraint
            .iter()
            .map(|&m| if m > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let s: f64 = a.iter().zip(&self.constraint).map(|(x, m)| x * m).sum();
        a.into_iter().map(|x| x / s).collect()
    }

    /// Projection onto the feasible set with unsupported coordinates fixed at 0.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let masked: Vec<f64> = v
            .iter()
            .zip(&self.constraint)
            .map(|(&x, &m)| if m > 0.0 { x } else { 0.0 })
            .collect();
        project_nonneg_hyperplane(&masked, &self.constraint)
            .expect("constraint has a positive entry")
    }

    fn unflatten(&self, a: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((self.num_bases, self.num_labels), a.to_vec())
            .expect("dimensions agree")
    }
}

/// Objective value and `K × L` gradient at coefficients `a`.
pub fn sees_c_objective(
    a: &Array2<f64>,
    source: &TabularDataset,
    target: &TabularDataset,
    basis: &BasisSet,
    cfg: &SeesCConfig,
) -> Result<(f64, Array2<f64>)> {
    let problem = SeesCProblem::new(source, target, basis, cfg)?;
    if a.dim() != (problem.num_bases, problem.num_labels) {
        return Err(Error::InvalidConfig(format!(
            "coefficients are {:?}, expected ({}, {})",
            a.dim(),
            problem.num_bases,
            problem.num_labels
        )));
    }
    let flat: Vec<f64> = a.iter().copied().collect();
    let (v, g) = problem.value_and_gradient(&flat);
    Ok((v, problem.unflatten(&g)))
}

#[derive(Debug, Clone)]
pub struct SeesCFit {
    pub weights: WeightFunction,
    pub coefficients: Array2<f64>,
    pub feature_scores: Vec<f64>,
    pub converged: bool,
    /// Objective after the start point and every accepted step.
    pub trace: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Runs projected gradient ascent from the constant-weight start.
pub fn run_sees_c(
    source: &TabularDataset,
    target: &TabularDataset,
    basis: &BasisSet,
    cfg: &SeesCConfig,
) -> Result<SeesCFit> {
    let problem = SeesCProblem::new(source, target, basis, cfg)?;
    if problem.constraint.iter().all(|&m| m <= 0.0) {
        return Err(Error::InvalidDataset(
            "basis functions vanish on every source row".into(),
        ));
    }
    let opts = AscentOptions {
        step_size: cfg.step_size,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        ..AscentOptions::default()
    };
    let res = projected_ascent(
        problem.initial_point(),
        |a| problem.value_and_gradient(a),
        |v| problem.project(v),
        &opts,
    );
    let residual = problem.constraint_residual(&res.point);
    let feasible = residual.abs() < 1e-8 && res.point.iter().all(|&x| x >= 0.0);
    if !feasible {
        log::warn!("SEES-c projection left constraint residual {residual:e}");
    }
    let coefficients = problem.unflatten(&res.point);
    let scores = feature_scores(&coefficients, basis);

    let mut diagnostics = Diagnostics::new();
    diagnostics.insert("objective".into(), res.value);
    diagnostics.insert("log_likelihood".into(), problem.likelihood(&res.point));
    diagnostics.insert("constraint_residual".into(), residual);
    diagnostics.insert("iterations".into(), res.iterations as f64);
    diagnostics.insert("converged".into(), f64::from(u8::from(res.converged && feasible)));
    diagnostics.insert("eta".into(), cfg.eta);
    diagnostics.insert("distinct_target_rows".into(), problem.target_terms.len() as f64);

    Ok(SeesCFit {
        weights: WeightFunction::Basis(BasisWeights {
            basis: basis.clone(),
            coefficients: coefficients.clone(),
        }),
        coefficients,
        feature_scores: scores,
        converged: res.converged && feasible,
        trace: res.trace,
        diagnostics,
    })
}

/// Per-feature group norms `β_i = ‖a[e_i, :]‖₂`.
pub fn feature_scores(a: &Array2<f64>, basis: &BasisSet) -> Vec<f64> {
    basis
        .groups()
        .iter()
        .map(|g| {
            g.iter()
                .flat_map(|&k| a.row(k).to_vec())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}
