//! Small box-constrained least-squares problems
//! `min_w  wᵀGw − 2hᵀw + c  s.t.  lo ≤ w ≤ hi`.
//!
//! Solved by projected gradient with exact line search along the projected
//! direction, followed by an exact solve on the free coordinates once the
//! active set has settled.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxLsSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BoxLsOptions {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub max_iters: usize,
}

/// Row-major `n × n` Gram matrix and linear term of a least-squares block.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub n: usize,
    pub gram: Vec<f64>,
    pub rhs: Vec<f64>,
    pub constant: f64,
}

impl NormalEquations {
    pub fn zeros(n: usize) -> Self {
        NormalEquations {
            n,
            gram: vec![0.0; n * n],
            rhs: vec![0.0; n],
            constant: 0.0,
        }
    }

    /// Adds the residual row `(b − aᵀw)²`.
    pub fn add_row(&mut self, a: &[f64], b: f64) {
        for i in 0..self.n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..self.n {
                self.gram[i * self.n + j] += a[i] * a[j];
            }
            self.rhs[i] += a[i] * b;
        }
        self.constant += b * b;
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.n {
            let gw: f64 = (0..self.n).map(|j| self.gram[i * self.n + j] * w[j]).sum();
            quad += w[i] * (gw - 2.0 * self.rhs[i]);
        }
        quad + self.constant
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let gw: f64 = (0..self.n).map(|j| self.gram[i * self.n + j] * w[j]).sum();
                2.0 * (gw - self.rhs[i])
            })
            .collect()
    }

    fn curvature(&self, d: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let gd: f64 = (0..self.n).map(|j| self.gram[i * self.n + j] * d[j]).sum();
            s += d[i] * gd;
        }
        s
    }
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Minimizes the block objective from `start` within `[lo, hi]^n`.
pub fn solve_box_ls(eq: &NormalEquations, start: &[f64], opts: &BoxLsOptions) -> BoxLsSolution {
    let n = eq.n;
    let mut w: Vec<f64> = start.iter().map(|&v| clip(v, opts.lo, opts.hi)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let g = eq.gradient(&w);
        let gg: f64 = g.iter().map(|x| x * x).sum();
        if gg == 0.0 {
            converged = true;
            break;
        }
        let ggg = eq.curvature(&g);
        let t = if ggg > 0.0 { gg / (2.0 * ggg) } else { 1.0 };
        let d: Vec<f64> = (0..n)
            .map(|i| clip(w[i] - t * g[i], opts.lo, opts.hi) - w[i])
            .collect();
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            converged = true;
            break;
        }
        let curv = eq.curvature(&d);
        let alpha = if curv > 0.0 {
            (-slope / (2.0 * curv)).min(1.0)
        } else {
            1.0
        };
        let mut change: f64 = 0.0;
        for i in 0..n {
            let next = clip(w[i] + alpha * d[i], opts.lo, opts.hi);
            change = change.max((next - w[i]).abs());
            w[i] = next;
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    polish(eq, &mut w, opts);
    BoxLsSolution {
        objective: eq.objective(&w).max(0.0),
        x: w,
        iterations,
        converged,
    }
}

/// Solves the unconstrained problem on the coordinates strictly inside the
/// box, keeping the result only if it stays feasible and does not worsen
/// the objective.
fn polish(eq: &NormalEquations, w: &mut [f64], opts: &BoxLsOptions) {
    let eps = 1e-12;
    let free: Vec<usize> = (0..eq.n)
        .filter(|&i| w[i] > opts.lo + eps && w[i] < opts.hi - eps)
        .collect();
    if free.is_empty() {
        return;
    }
    let k = free.len();
    let gff = DMatrix::from_fn(k, k, |a, b| eq.gram[free[a] * eq.n + free[b]]);
    let rhs = DVector::from_fn(k, |a, _| {
        let i = free[a];
        let fixed: f64 = (0..eq.n)
            .filter(|j| !free.contains(j))
            .map(|j| eq.gram[i * eq.n + j] * w[j])
            .sum();
        eq.rhs[i] - fixed
    });
    let Some(sol) = gff.clone().lu().solve(&rhs) else {
        return;
    };
    if sol.iter().any(|v| !v.is_finite() || *v < opts.lo || *v > opts.hi) {
        return;
    }
    let mut trial = w.to_vec();
    for (a, &i) in free.iter().enumerate() {
        trial[i] = sol[a];
    }
    if eq.objective(&trial) <= eq.objective(w) + 1e-15 {
        w.copy_from_slice(&trial);
    }
}
