//! Subset-search density matching for discrete features.
//!
//! For every candidate shifted index set `J` with `|J| = s`, weights
//! `w_J(x_J, y) ∈ [0, M]` are fit by least squares so that the reweighted
//! source reproduces the target's low-dimensional marginals:
//!
//! ```text
//! dd(J, w) = Σ_{κ ⊇ J, |κ| = min(2s, d)} Σ_f Σ_{x_κ} ( q(x_κ, f) − Σ_y w_J(x_J, y) p(x_κ, f, y) )²
//! ```
//!
//! where `f` is the classifier's hard prediction. The set with the smallest
//! attained distance is selected. For a fixed `J` the residuals involving
//! different `x_J` values share no unknowns, so the fit splits into one
//! `L`-variable box-constrained problem per `x_J` configuration.
//!
//! Estimators take any [`MarginalSource`], so the same code runs on samples
//! and on exact population tables.

use std::collections::BTreeMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxqp::{solve_box_ls, BoxLsOptions, NormalEquations};
use crate::error::{Error, Result};
use crate::report::Diagnostics;
use crate::tabulate::{Axis, EmpiricalPmf, MarginalSource};
use crate::weights::{TableWeights, WeightFunction};

/// Largest number of candidate sets searched.
pub const MAX_CANDIDATES: u128 = 100_000;

/// Distances closer than this are treated as ties.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeesDConfig {
    pub sparsity: usize,
    pub weight_bound: f64,
    /// Unknowns whose source mass `p(x_J, y)` does not exceed this are left
    /// unconstrained.
    pub min_mass_floor: f64,
    pub parallel: bool,
}

impl Default for SeesDConfig {
    fn default() -> Self {
        SeesDConfig {
            sparsity: 1,
            weight_bound: 20.0,
            min_mass_floor: 0.0,
            parallel: true,
        }
    }
}

impl SeesDConfig {
    pub fn with_sparsity(sparsity: usize) -> Self {
        SeesDConfig {
            sparsity,
            ..Default::default()
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.sparsity > d {
            return Err(Error::InvalidConfig(format!(
                "sparsity {} exceeds feature count {d}",
                self.sparsity
            )));
        }
        if !(self.weight_bound >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "weight bound {} < 1",
                self.weight_bound
            )));
        }
        if !(self.min_mass_floor >= 0.0) {
            return Err(Error::InvalidConfig("negative mass floor".into()));
        }
        Ok(())
    }
}

/// Best fit for one candidate set, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFit {
    pub index_set: Vec<usize>,
    pub weights: TableWeights,
    pub distance: f64,
    /// `(x_J, y)` unknowns with no source mass, fixed at 1.
    pub unconstrained: usize,
}

/// All supersets of `j` of size `min(2s, d)`, sorted lexicographically.
pub fn enumerate_kappas(j: &[usize], d: usize, s: usize) -> Vec<Vec<usize>> {
    let size = (2 * s).min(d);
    if size <= j.len() {
        return vec![j.to_vec()];
    }
    let rest: Vec<usize> = (0..d).filter(|i| !j.contains(i)).collect();
    let mut out: Vec<Vec<usize>> = rest
        .into_iter()
        .combinations(size - j.len())
        .map(|extra| {
            let mut k: Vec<usize> = j.iter().copied().chain(extra).collect();
            k.sort_unstable();
            k
        })
        .collect();
    out.sort();
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Source `p(x_κ, f, y)` and target `q(x_κ, f)` for one `κ`.
#[derive(Debug, Clone)]
struct KappaTables {
    kappa: Vec<usize>,
    source: EmpiricalPmf,
    target: EmpiricalPmf,
}

fn kappa_tables<S, T>(source: &S, target: &T, kappa: &[usize]) -> Result<KappaTables>
where
    S: MarginalSource + ?Sized,
    T: MarginalSource + ?Sized,
{
    let mut axes: Vec<Axis> = kappa.iter().map(|&i| Axis::Feature(i)).collect();
    axes.push(Axis::Prediction);
    let target_pmf = target.marginal(&axes)?;
    axes.push(Axis::Label);
    let source_pmf = source.marginal(&axes)?;
    if source_pmf.cardinalities()[..kappa.len() + 1] != target_pmf.cardinalities()[..] {
        return Err(Error::SchemaMismatch {
            column: format!("{kappa:?}"),
            reason: "source and target cardinalities differ".into(),
        });
    }
    Ok(KappaTables {
        kappa: kappa.to_vec(),
        source: source_pmf,
        target: target_pmf,
    })
}

/// Walks every residual row of `dd(J, ·)` over the given tables, calling
/// `visit(block, p(x_κ, f, ·), q(x_κ, f))`. Rows where both sides vanish
/// are skipped.
fn for_each_residual(
    j: &[usize],
    j_cards: &[usize],
    tables: &[&KappaTables],
    mut visit: impl FnMut(usize, &[f64], f64),
) {
    for t in tables {
        let l = *t.source.cardinalities().last().expect("label axis");
        let pos: Vec<usize> = j
            .iter()
            .map(|i| t.kappa.iter().position(|k| k == i).expect("J ⊆ κ"))
            .collect();
        let p = t.source.masses();
        let mut q_off = 0;
        t.target.for_each_cell(|cell, q| {
            let a = &p[q_off * l..(q_off + 1) * l];
            q_off += 1;
            if q == 0.0 && a.iter().all(|&v| v == 0.0) {
                return;
            }
            let block = pos
                .iter()
                .zip(j_cards)
                .fold(0, |acc, (&ps, &k)| acc * k + cell[ps]);
            visit(block, a, q);
        });
    }
}

fn fit_with_tables<S>(
    source: &S,
    j: &[usize],
    tables: &[&KappaTables],
    cfg: &SeesDConfig,
) -> Result<CandidateFit>
where
    S: MarginalSource + ?Sized,
{
    let l = source.label_cardinality();
    let j_cards = j
        .iter()
        .map(|&i| source.feature_cardinality(i))
        .collect::<Result<Vec<_>>>()?;
    let blocks: usize = j_cards.iter().product();

    // p(x_J, y) decides which unknowns carry information
    let mut axes: Vec<Axis> = j.iter().map(|&i| Axis::Feature(i)).collect();
    axes.push(Axis::Label);
    let support = source.marginal(&axes)?;
    let observed: Vec<bool> = support
        .masses()
        .iter()
        .map(|&m| m > cfg.min_mass_floor)
        .collect();

    let mut systems = vec![NormalEquations::zeros(l); blocks];
    for_each_residual(j, &j_cards, tables, |block, a, b| {
        let masked: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(y, &v)| if observed[block * l + y] { v } else { 0.0 })
            .collect();
        systems[block].add_row(&masked, b);
    });

    let opts = BoxLsOptions {
        lo: 0.0,
        hi: cfg.weight_bound,
        tol: 1e-10,
        max_iters: 10_000,
    };
    let mut weights = vec![1.0; blocks * l];
    let mut unconstrained = 0;
    for (b, sys) in systems.iter().enumerate() {
        let free: Vec<usize> = (0..l).filter(|&y| observed[b * l + y]).collect();
        unconstrained += l - free.len();
        if free.is_empty() {
            continue;
        }
        let mut sub = NormalEquations::zeros(free.len());
        for (a, &ya) in free.iter().enumerate() {
            sub.rhs[a] = sys.rhs[ya];
            for (c, &yc) in free.iter().enumerate() {
                sub.gram[a * free.len() + c] = sys.gram[ya * l + yc];
            }
        }
        sub.constant = sys.constant;
        let sol = solve_box_ls(&sub, &vec![1.0; free.len()], &opts);
        for (a, &y) in free.iter().enumerate() {
            weights[b * l + y] = sol.x[a];
        }
    }
    let weights = TableWeights::new(j.to_vec(), j_cards.clone(), l, weights, observed)?;
    let distance = residual_sum(j, &j_cards, tables, &weights);
    Ok(CandidateFit {
        index_set: j.to_vec(),
        weights,
        distance,
        unconstrained,
    })
}

fn residual_sum(j: &[usize], j_cards: &[usize], tables: &[&KappaTables], w: &TableWeights) -> f64 {
    let l = w.label_cardinality();
    let vals = w.values();
    let mut total = 0.0;
    for_each_residual(j, j_cards, tables, |block, a, b| {
        let fit: f64 = a
            .iter()
            .zip(&vals[block * l..(block + 1) * l])
            .map(|(x, y)| x * y)
            .sum();
        total += (b - fit) * (b - fit);
    });
    total
}

fn check_inputs<S, T>(source: &S, target: &T, cfg: &SeesDConfig) -> Result<usize>
where
    S: MarginalSource + ?Sized,
    T: MarginalSource + ?Sized,
{
    let d = source.num_features();
    if target.num_features() != d {
        return Err(Error::SchemaMismatch {
            column: "features".into(),
            reason: format!("{d} source features vs {}", target.num_features()),
        });
    }
    cfg.validate(d)?;
    Ok(d)
}

/// Fits weights for one candidate set `j` (sorted, 0-based).
pub fn fit_candidate<S, T>(source: &S, target: &T, j: &[usize], cfg: &SeesDConfig) -> Result<CandidateFit>
where
    S: MarginalSource + ?Sized,
    T: MarginalSource + ?Sized,
{
    let d = check_inputs(source, target, cfg)?;
    if j.len() != cfg.sparsity || !j.windows(2).all(|w| w[0] < w[1]) || j.iter().any(|&i| i >= d) {
        return Err(Error::InvalidConfig(format!(
            "candidate {j:?} must be {} sorted indices below {d}",
            cfg.sparsity
        )));
    }
    let tables = enumerate_kappas(j, d, cfg.sparsity)
        .iter()
        .map(|k| kappa_tables(source, target, k))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&KappaTables> = tables.iter().collect();
    fit_with_tables(source, j, &refs, cfg)
}

/// Recomputes `dd(J, w)` for the index set stored in `w`.
pub fn candidate_distance<S, T>(source: &S, target: &T, w: &TableWeights, s: usize) -> Result<f64>
where
    S: MarginalSource + ?Sized,
    T: MarginalSource + ?Sized,
{
    let d = source.num_features();
    let j = w.index_set();
    let tables = enumerate_kappas(j, d, s)
        .iter()
        .map(|k| kappa_tables(source, target, k))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&KappaTables> = tables.iter().collect();
    Ok(residual_sum(j, w.cardinalities(), &refs, w))
}

#[derive(Debug, Clone)]
pub struct SeesDFit {
    /// Selected weights rescaled to unit source mean.
    pub weights: WeightFunction,
    pub index_set: Vec<usize>,
    /// Attained distance of the selected set, before rescaling.
    pub distance: f64,
    /// Every candidate with its attained distance, in search order.
    pub candidates: Vec<(Vec<usize>, f64)>,
    pub selected: CandidateFit,
    pub diagnostics: Diagnostics,
}

/// Searches every index set of size `s` and keeps the best-fitting one.
pub fn run_sees_d<S, T>(source: &S, target: &T, cfg: &SeesDConfig) -> Result<SeesDFit>
where
    S: MarginalSource + ?Sized,
    T: MarginalSource + ?Sized,
{
    let d = check_inputs(source, target, cfg)?;
    let s = cfg.sparsity;
    let count = binomial(d, s);
    if count > MAX_CANDIDATES {
        return Err(Error::TooManyCandidates {
            candidates: count,
            limit: MAX_CANDIDATES,
        });
    }
    let candidates: Vec<Vec<usize>> = (0..d).combinations(s).collect();

    let mut kappa_index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for j in &candidates {
        for k in enumerate_kappas(j, d, s) {
            let next = kappa_index.len();
            kappa_index.entry(k).or_insert(next);
        }
    }
    let mut kappas: Vec<(usize, &Vec<usize>)> = kappa_index.iter().map(|(k, &i)| (i, k)).collect();
    kappas.sort();
    let build = |k: &Vec<usize>| kappa_tables(source, target, k);
    let tables: Vec<KappaTables> = if cfg.parallel {
        kappas.par_iter().map(|(_, k)| build(k)).collect::<Result<_>>()?
    } else {
        kappas.iter().map(|(_, k)| build(k)).collect::<Result<_>>()?
    };

    let fit_one = |j: &Vec<usize>| {
        let refs: Vec<&KappaTables> = enumerate_kappas(j, d, s)
            .iter()
            .map(|k| &tables[kappa_index[k]])
            .collect();
        fit_with_tables(source, j, &refs, cfg)
    };
    let fits: Vec<CandidateFit> = if cfg.parallel {
        candidates.par_iter().map(fit_one).collect::<Result<_>>()?
    } else {
        candidates.iter().map(fit_one).collect::<Result<_>>()?
    };

    let mut best = 0;
    for (i, f) in fits.iter().enumerate().skip(1) {
        if f.distance < fits[best].distance - TIE_TOL {
            best = i;
        }
    }
    let selected = fits[best].clone();
    let (weights, mean) = normalize_table(source, &selected.weights)?;

    let mut diagnostics = Diagnostics::new();
    diagnostics.insert("objective".into(), selected.distance);
    diagnostics.insert("candidates".into(), fits.len() as f64);
    diagnostics.insert("kappa_sets".into(), tables.len() as f64);
    diagnostics.insert("unconstrained_cells".into(), selected.unconstrained as f64);
    diagnostics.insert("mean_weight_before_normalization".into(), mean);
    diagnostics.insert("sparsity".into(), s as f64);
    if fits.len() > 1 {
        let runner_up = fits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, f)| f.distance)
            .fold(f64::INFINITY, f64::min);
        diagnostics.insert("runner_up_objective".into(), runner_up);
    }

    Ok(SeesDFit {
        weights: WeightFunction::Table(weights),
        index_set: selected.index_set.clone(),
        distance: selected.distance,
        candidates: fits.iter().map(|f| (f.index_set.clone(), f.distance)).collect(),
        selected,
        diagnostics,
    })
}

/// Rescales a table so that `Σ p(x_J, y) w(x_J, y) = 1`; returns the mean
/// before rescaling.
pub fn normalize_table<S>(source: &S, w: &TableWeights) -> Result<(TableWeights, f64)>
where
    S: MarginalSource + ?Sized,
{
    let mut axes: Vec<Axis> = w.index_set().iter().map(|&i| Axis::Feature(i)).collect();
    axes.push(Axis::Label);
    let p = source.marginal(&axes)?;
    let mean: f64 = p
        .masses()
        .iter()
        .zip(w.values().iter().zip(w.observed()))
        .map(|(m, (v, &seen))| m * if seen { *v } else { 1.0 })
        .sum();
    if !(mean > 0.0) {
        return Err(Error::InvalidDataset(
            "fitted weights vanish on the source; cannot normalize".into(),
        ));
    }
    Ok((w.clone().scaled(1.0 / mean), mean))
}
