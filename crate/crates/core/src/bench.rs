//! Simulation suites comparing every estimator against known shifts.
//!
//! * `tradeoff`: one shifted feature among six, sample sizes 2500 to 40000;
//! * `sparsity`: true shift sparsity 0 to 3 among seven features;
//! * `robustness`: label, covariate and joint shift of the age-diagnosis base;
//! * `sensitivity`: true sparsity 3, configured sparsity 0 to 7.
//!
//! Every setting runs the same seeds; per-run rows come out in setting,
//! seed, method order regardless of thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{run_method, EstimateConfig};
use crate::report::Method;
use crate::synth::{
    binary_base, one_sjs_scenario, robustness_scenarios, simulate, three_sjs_scenario, tilted_spec, Scenario,
    Shift,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Tradeoff,
    Sparsity,
    Robustness,
    Sensitivity,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tradeoff" => Ok(Suite::Tradeoff),
            "sparsity" => Ok(Suite::Sparsity),
            "robustness" => Ok(Suite::Robustness),
            "sensitivity" => Ok(Suite::Sensitivity),
            other => Err(Error::InvalidConfig(format!("unknown suite {other:?}"))),
        }
    }
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Tradeoff => "tradeoff",
            Suite::Sparsity => "sparsity",
            Suite::Robustness => "robustness",
            Suite::Sensitivity => "sensitivity",
        }
    }
}

pub const TRADEOFF_SIZES: [usize; 5] = [2500, 5000, 10000, 20000, 40000];
pub const DEFAULT_N: usize = 10_000;

/// One simulated setting: a scenario, sample sizes and the estimator
/// configuration.
#[derive(Debug, Clone)]
pub struct Setting {
    pub label: String,
    pub scenario: Scenario,
    pub n: usize,
    pub config: EstimateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub suite: String,
    pub setting: String,
    pub seed: u64,
    pub method: Method,
    pub delta_hat: f64,
    pub true_delta: f64,
    pub gap_squared_error: f64,
    pub weight_mse: f64,
    pub weight_pcc: f64,
    pub selected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub suite: String,
    pub setting: String,
    pub method: Method,
    pub runs: usize,
    pub mean_gap_squared_error: f64,
    pub mean_weight_mse: f64,
    pub mean_weight_pcc: f64,
}

fn base_config() -> EstimateConfig {
    EstimateConfig::default()
}

/// The settings of a suite, in output order.
pub fn settings(suite: Suite) -> Vec<Setting> {
    match suite {
        Suite::Tradeoff => TRADEOFF_SIZES
            .iter()
            .map(|&n| Setting {
                label: format!("n={n}"),
                scenario: one_sjs_scenario(6, 2),
                n,
                config: base_config(),
            })
            .collect(),
        Suite::Sparsity => (0..=3)
            .map(|s| Setting {
                label: format!("s={s}"),
                scenario: sparsity_scenario(s),
                n: DEFAULT_N,
                config: EstimateConfig {
                    sparsity: s,
                    ..base_config()
                },
            })
            .collect(),
        Suite::Robustness => robustness_scenarios()
            .into_iter()
            .map(|(name, scenario)| Setting {
                label: name.to_string(),
                scenario,
                n: DEFAULT_N,
                config: base_config(),
            })
            .collect(),
        Suite::Sensitivity => (0..=7)
            .map(|s| Setting {
                label: format!("s={s}"),
                scenario: three_sjs_scenario(),
                n: DEFAULT_N,
                config: EstimateConfig {
                    sparsity: s,
                    ..base_config()
                },
            })
            .collect(),
    }
}

/// Shift of true sparsity `s` on seven binary features: label shift for
/// `s = 0`, otherwise the first `s` features tilted jointly with the label.
pub fn sparsity_scenario(s: usize) -> Scenario {
    if s == 3 {
        return three_sjs_scenario();
    }
    let base = binary_base(7);
    if s == 0 {
        return Scenario {
            base,
            shift: Shift::Label {
                marginal: vec![0.3, 0.7],
            },
        };
    }
    let features: Vec<usize> = (0..s).collect();
    let spec = tilted_spec(&base, &features, |c, y| {
        c.iter()
            .enumerate()
            .map(|(k, &code)| {
                let strength = [3.0, 1.6][k];
                if code == y {
                    strength
                } else {
                    0.5
                }
            })
            .product()
    });
    Scenario {
        base,
        shift: Shift::Joint(spec),
    }
}

/// Runs every method on `seeds` simulated pairs of one setting.
pub fn run_setting(suite: &str, setting: &Setting, seeds: u64, methods: &[Method]) -> Result<Vec<BenchRow>> {
    let per_seed = |seed: u64| -> Result<Vec<BenchRow>> {
        let trial = simulate(&setting.scenario, setting.n, setting.n, seed)?;
        let cfg = EstimateConfig {
            seed,
            parallel: false,
            ..setting.config
        };
        let mut rows = Vec::with_capacity(methods.len());
        for &m in methods {
            let run = run_method(m, &trial.source, &trial.target, &cfg, Some(&trial.truth))?;
            let r = run.report;
            let metrics = r.weight_metrics.expect("truth supplied");
            let true_delta = trial.truth.true_gap()?;
            rows.push(BenchRow {
                suite: suite.to_string(),
                setting: setting.label.clone(),
                seed,
                method: m,
                delta_hat: r.delta_hat,
                true_delta,
                gap_squared_error: (r.delta_hat - true_delta).powi(2),
                weight_mse: metrics.mse,
                weight_pcc: metrics.pcc,
                selected: r
                    .selected_features
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            });
        }
        Ok(rows)
    };
    let chunks: Vec<Vec<BenchRow>> = (0..seeds).into_par_iter().map(per_seed).collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn run_suite(suite: Suite, seeds: u64, methods: &[Method]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for s in settings(suite) {
        rows.extend(run_setting(suite.name(), &s, seeds, methods)?);
    }
    Ok(rows)
}

/// Means per `(setting, method)`, in first-appearance order.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for r in rows {
        let pos = out
            .iter()
            .position(|s| s.suite == r.suite && s.setting == r.setting && s.method == r.method);
        let s = match pos {
            Some(p) => &mut out[p],
            None => {
                out.push(SummaryRow {
                    suite: r.suite.clone(),
                    setting: r.setting.clone(),
                    method: r.method,
                    runs: 0,
                    mean_gap_squared_error: 0.0,
                    mean_weight_mse: 0.0,
                    mean_weight_pcc: 0.0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        s.runs += 1;
        s.mean_gap_squared_error += r.gap_squared_error;
        s.mean_weight_mse += r.weight_mse;
        s.mean_weight_pcc += r.weight_pcc;
    }
    for s in &mut out {
        let n = s.runs as f64;
        s.mean_gap_squared_error /= n;
        s.mean_weight_mse /= n;
        s.mean_weight_pcc /= n;
    }
    out
}

/// Looks up one summary cell.
pub fn summary_of<'a>(summary: &'a [SummaryRow], setting: &str, method: Method) -> Option<&'a SummaryRow> {
    summary.iter().find(|s| s.setting == setting && s.method == method)
}

/// Per-run rows followed by the means, with `seed` set to `mean`.
pub fn write_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "suite",
        "setting",
        "seed",
        "method",
        "delta_hat",
        "true_delta",
        "gap_squared_error",
        "weight_mse",
        "weight_pcc",
        "selected",
    ])?;
    for r in rows {
        w.write_record([
            r.suite.clone(),
            r.setting.clone(),
            r.seed.to_string(),
            r.method.to_string(),
            r.delta_hat.to_string(),
            r.true_delta.to_string(),
            r.gap_squared_error.to_string(),
            r.weight_mse.to_string(),
            r.weight_pcc.to_string(),
            r.selected.clone(),
        ])?;
    }
    for s in summarize(rows) {
        w.write_record([
            s.suite.clone(),
            s.setting.clone(),
            "mean".to_string(),
            s.method.to_string(),
            String::new(),
            String::new(),
            s.mean_gap_squared_error.to_string(),
            s.mean_weight_mse.to_string(),
            s.mean_weight_pcc.to_string(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
