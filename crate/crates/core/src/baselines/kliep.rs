//! Kernel density-ratio fitting for covariate shift.
//!
//! The ratio is modeled as `w(x) = Σ_b α_b k_b(x)` with Gaussian kernels
//! `k_b(x) = exp(−‖x − c_b‖² / 2σ²)` centered at target rows. The
//! coefficients maximize the target log-likelihood of the reweighted source
//!
//! ```text
//! max_α  mean_target log w(x)   s.t.  α ≥ 0,  mean_source w(x) = 1
//! ```
//!
//! by projected gradient ascent. Rows are embedded with one-hot discrete
//! columns and standardized continuous columns; `σ` is the median pairwise
//! distance of a row subsample.

use std::collections::HashMap;

use ndarray::ArrayView1;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_schemas, ColumnKind, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::optim::{project_nonneg_hyperplane, projected_ascent, AscentOptions};
use crate::report::Diagnostics;
use crate::weights::{CovariateWeights, WeightFunction};

const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KliepConfig {
    pub centers: usize,
    pub max_iters: usize,
    /// Rows used for the bandwidth heuristic.
    pub subsample: usize,
    pub seed: u64,
}

impl Default for KliepConfig {
    fn default() -> Self {
        KliepConfig {
            centers: 100,
            max_iters: 2500,
            subsample: 1000,
            seed: 0,
        }
    }
}

/// Row embedding shared by fitting and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Embedding {
    schema: FeatureSchema,
    /// Per column: offset, and mean/scale for continuous columns.
    layout: Vec<(usize, f64, f64)>,
    width: usize,
}

impl Embedding {
    fn fit(source: &TabularDataset, target: &TabularDataset) -> Self {
        let mut layout = Vec::new();
        let mut width = 0;
        for (j, col) in source.schema().columns().iter().enumerate() {
            match col.kind {
                ColumnKind::Discrete { cardinality } => {
                    layout.push((width, 0.0, 1.0));
                    width += cardinality;
                }
                ColumnKind::Continuous => {
                    let vals = source.rows().column(j).to_vec();
                    let all: Vec<f64> = vals.into_iter().chain(target.rows().column(j).iter().copied()).collect();
                    let n = all.len().max(1) as f64;
                    let mean = all.iter().sum::<f64>() / n;
                    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    layout.push((width, mean, if var > 0.0 { var.sqrt() } else { 1.0 }));
                    width += 1;
                }
            }
        }
        Embedding {
            schema: source.schema().clone(),
            layout,
            width,
        }
    }

    fn embed(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for (j, col) in self.schema.columns().iter().enumerate() {
            let (off, mean, scale) = self.layout[j];
            match col.kind {
                ColumnKind::Discrete { .. } => out[off + x[j] as usize - 1] = 1.0,
                ColumnKind::Continuous => out[off] = (x[j] - mean) / scale,
            }
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    embedding: Embedding,
    centers: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    pub bandwidth: f64,
    /// Global multiplier applied after the kernel sum.
    pub scale: f64,
}

impl KernelWeights {
    fn kernel_row(&self, z: &[f64]) -> Vec<f64> {
        let denom = 2.0 * self.bandwidth * self.bandwidth;
        self.centers
            .iter()
            .map(|c| (-sq_dist(z, c) / denom).exp())
            .collect()
    }

    pub fn weight(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.embedding.embed(x);
        let k = self.kernel_row(&z);
        self.scale * k.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.alpha
    }
}

#[derive(Debug, Clone)]
pub struct KliepFit {
    pub weights: WeightFunction,
    pub trace: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Distinct embedded rows with their row shares.
fn compress(emb: &Embedding, ds: &TabularDataset) -> Vec<(Vec<f64>, f64)> {
    let share = 1.0 / ds.len() as f64;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..ds.len() {
        let z = emb.embed(ds.row(i));
        let key = z.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&g) => out[g].1 += share,
            None => {
                index.insert(key, out.len());
                out.push((z, share));
            }
        }
    }
    out
}

fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

pub fn run_kliep(source: &TabularDataset, target: &TabularDataset, cfg: &KliepConfig) -> Result<KliepFit> {
    check_schemas(source.schema(), target.schema())?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidDataset("kernel fitting needs nonempty samples".into()));
    }
    if cfg.centers == 0 || cfg.subsample < 2 {
        return Err(Error::InvalidConfig(
            "kernel fitting needs at least one center and two subsample rows".into(),
        ));
    }
    let emb = Embedding::fit(source, target);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let pooled = source.len() + target.len();
    let sub: Vec<Vec<f64>> = sample(&mut rng, pooled, cfg.subsample.min(pooled))
        .into_iter()
        .map(|i| {
            if i < source.len() {
                emb.embed(source.row(i))
            } else {
                emb.embed(target.row(i - source.len()))
            }
        })
        .collect();
    let bandwidth = median_pairwise_distance(&sub);
    if !(bandwidth > 0.0) {
        return Err(Error::DegenerateKernel);
    }
    let centers: Vec<Vec<f64>> = sample(&mut rng, target.len(), cfg.centers.min(target.len()))
        .into_iter()
        .map(|i| emb.embed(target.row(i)))
        .collect();

    let mut model = KernelWeights {
        embedding: emb,
        centers,
        alpha: Vec::new(),
        bandwidth,
        scale: 1.0,
    };
    let tgt: Vec<(Vec<f64>, f64)> = compress(&model.embedding, target)
        .into_iter()
        .map(|(z, s)| (model.kernel_row(&z), s))
        .collect();
    let b = model.centers.len();
    let mut m = vec![0.0; b];
    for (z, s) in compress(&model.embedding, source) {
        for (mj, kj) in m.iter_mut().zip(model.kernel_row(&z)) {
            *mj += s * kj;
        }
    }

    let objective = |a: &[f64]| {
        let mut value = 0.0;
        let mut grad = vec![0.0; b];
        for (k, s) in &tgt {
            let w: f64 = k.iter().zip(a).map(|(k, a)| k * a).sum();
            if w > LOG_FLOOR {
                value += s * w.ln();
                for (g, kj) in grad.iter_mut().zip(k) {
                    *g += s * kj / w;
                }
            } else {
                value += s * LOG_FLOOR.ln();
            }
        }
        (value, grad)
    };
    let project = |v: &[f64]| project_nonneg_hyperplane(v, &m).expect("kernels are positive");
    let total: f64 = m.iter().sum();
    let start = vec![1.0 / total; b];
    let opts = AscentOptions {
        step_size: 1.0,
        max_iters: cfg.max_iters,
        tol: 0.0,
        ..AscentOptions::default()
    };
    let res = projected_ascent(start, objective, project, &opts);
    let residual: f64 = res.point.iter().zip(&m).map(|(a, m)| a * m).sum::<f64>() - 1.0;
    model.alpha = res.point;

    let mut diagnostics = Diagnostics::new();
    diagnostics.insert("objective".into(), res.value);
    diagnostics.insert("bandwidth".into(), bandwidth);
    diagnostics.insert("iterations".into(), res.iterations as f64);
    diagnostics.insert("centers".into(), b as f64);
    diagnostics.insert("constraint_residual".into(), residual);
    let weights = WeightFunction::Covariate(CovariateWeights::Kernel(model));
    let (weights, mean) = weights.normalized(source)?;
    diagnostics.insert("mean_weight_before_normalization".into(), mean);
    Ok(KliepFit {
        weights,
        trace: res.trace,
        diagnostics,
    })
}
