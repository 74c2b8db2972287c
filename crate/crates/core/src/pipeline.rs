//! One estimator run from prepared samples to a report.

use serde::{Deserialize, Serialize};

use crate::baselines::{run_bbse, run_dlu, run_kliep, KliepConfig};
use crate::basis::default_basis;
use crate::data::{align_schemas, TabularDataset};
use crate::discretize::{apply_discretizer, fit_discretizer, DEFAULT_BINS};
use crate::error::Result;
use crate::estimator::{estimate_gap, score_weights, select_features, GroundTruth, Loss};
use crate::report::{Method, ShiftReport};
use crate::sees_c::{run_sees_c, SeesCConfig};
use crate::sees_d::{run_sees_d, SeesDConfig};
use crate::weights::WeightFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub sparsity: usize,
    pub eta: f64,
    pub bins: usize,
    pub weight_bound: f64,
    pub seed: u64,
    pub kliep_iters: usize,
    pub kliep_centers: usize,
    pub parallel: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            sparsity: 1,
            eta: 1e-3,
            bins: DEFAULT_BINS,
            weight_bound: 20.0,
            seed: 0,
            kliep_iters: 2500,
            kliep_centers: 100,
            parallel: true,
        }
    }
}

/// Weights plus the report built from them.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub weights: WeightFunction,
    pub report: ShiftReport,
}

/// Runs `method` on a labeled, predicted source and a predicted target.
///
/// The subset-search estimator and the confusion-matrix baseline work on
/// discretized copies (a no-op for all-discrete data); the others use the
/// raw rows. When `truth` is given its weights are scored on the source
/// rows the method was fit on.
pub fn run_method(
    method: Method,
    source: &TabularDataset,
    target: &TabularDataset,
    cfg: &EstimateConfig,
    truth: Option<&GroundTruth>,
) -> Result<MethodRun> {
    align_schemas(source, target)?;
    source.require_labels()?;
    source.require_predictions()?;
    target.require_predictions()?;
    let src_acc = source.accuracy()?;

    let discretized = || -> Result<(TabularDataset, TabularDataset)> {
        if source.schema().is_all_discrete() {
            return Ok((source.clone(), target.clone()));
        }
        let disc = fit_discretizer(source, cfg.bins)?;
        Ok((apply_discretizer(&disc, source)?, apply_discretizer(&disc, target)?))
    };

    let (weights, fit_source, diagnostics) = match method {
        Method::SeesD => {
            let (s, t) = discretized()?;
            let dcfg = SeesDConfig {
                sparsity: cfg.sparsity.min(s.num_features()),
                weight_bound: cfg.weight_bound,
                parallel: cfg.parallel,
                ..SeesDConfig::default()
            };
            let fit = run_sees_d(&s, &t, &dcfg)?;
            (fit.weights, s, fit.diagnostics)
        }
        Method::Bbse => {
            let (s, t) = discretized()?;
            let fit = run_bbse(&s, &t)?;
            (fit.weights, s, fit.diagnostics)
        }
        Method::SeesC => {
            let basis = default_basis(source)?;
            let ccfg = SeesCConfig {
                eta: cfg.eta,
                ..SeesCConfig::default()
            };
            let fit = run_sees_c(source, target, &basis, &ccfg)?;
            (fit.weights, source.clone(), fit.diagnostics)
        }
        Method::Kliep => {
            let kcfg = KliepConfig {
                centers: cfg.kliep_centers,
                max_iters: cfg.kliep_iters,
                seed: cfg.seed,
                ..KliepConfig::default()
            };
            let fit = run_kliep(source, target, &kcfg)?;
            (fit.weights, source.clone(), fit.diagnostics)
        }
        Method::Dlu => {
            let fit = run_dlu(source, target)?;
            (fit.weights, source.clone(), fit.diagnostics)
        }
    };

    let delta = estimate_gap(&fit_source, &weights, Loss::ZeroOne)?;
    let selected = select_features(&weights, cfg.sparsity);
    let mut report = ShiftReport::new(method, src_acc, delta, selected, diagnostics);
    report.selected_feature_names = report
        .selected_features
        .iter()
        .map(|&i| source.schema().column(i).name.clone())
        .collect();
    if let Some(t) = truth {
        report.weight_metrics = Some(score_weights(&weights, t, &fit_source)?);
        if let Ok(gap) = t.true_gap() {
            report.diagnostics.insert("true_delta".into(), gap);
            report.diagnostics.insert("gap_squared_error".into(), (delta - gap).powi(2));
        }
    }
    Ok(MethodRun { weights, report })
}
