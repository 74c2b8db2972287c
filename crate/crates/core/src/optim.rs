//! Projected gradient ascent over `{a ≥ 0, ⟨m, a⟩ = 1}`.
//!
//! Both the basis-expansion estimator and the kernel baseline maximize a
//! concave log-likelihood subject to nonnegative coefficients and a single
//! normalization hyperplane whose normal `m` is entrywise nonnegative.

/// Euclidean projection of `v` onto `{a ≥ 0, ⟨m, a⟩ = 1}`.
///
/// The projection has the form `a = max(0, v − τ m)` for the unique `τ`
/// solving the hyperplane equation; `τ` is found exactly by sweeping the
/// sorted breakpoints `v_i / m_i`. Coordinates with `m_i = 0` are only
/// clipped. A final rescale removes rounding error in the constraint
/// without affecting nonnegativity. Returns `None` when the set is empty
/// (every `m_i = 0`).
pub fn project_nonneg_hyperplane(v: &[f64], m: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(v.len(), m.len());
    let mut ratios: Vec<(f64, usize)> = m
        .iter()
        .enumerate()
        .filter(|(_, &mi)| mi > 0.0)
        .map(|(i, &mi)| (v[i] / mi, i))
        .collect();
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_by(|a, b| b.0.total_cmp(&a.0));

    // g(τ) = Σ_{active} m_i (v_i − τ m_i) is decreasing; the active set at
    // the root is a prefix of the breakpoints in descending order.
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut tau = f64::NAN;
    for (k, &(r, i)) in ratios.iter().enumerate() {
        s1 += m[i] * v[i];
        s2 += m[i] * m[i];
        let t = (s1 - 1.0) / s2;
        let next = ratios.get(k + 1).map_or(f64::NEG_INFINITY, |x| x.0);
        if t < r && t >= next {
            tau = t;
            break;
        }
    }
    if tau.is_nan() {
        // rounding pushed the root past the last breakpoint
        tau = (s1 - 1.0) / s2;
    }
    let mut a: Vec<f64> = v
        .iter()
        .zip(m)
        .map(|(&vi, &mi)| (vi - tau * mi).max(0.0))
        .collect();
    let dot: f64 = a.iter().zip(m).map(|(x, y)| x * y).sum();
    if dot > 0.0 {
        for x in &mut a {
            *x /= dot;
        }
    } else {
        // degenerate: put all mass on the largest-ratio coordinate
        let (_, i) = ratios[0];
        a.iter_mut().for_each(|x| *x = 0.0);
        a[i] = 1.0 / m[i];
    }
    Some(a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub max_halvings: usize,
    pub growth: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            step_size: 0.1,
            max_iters: 5000,
            tol: 1e-9,
            max_halvings: 60,
            growth: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the start point and every accepted step.
    pub trace: Vec<f64>,
}

/// Maximizes `objective` (returning value and gradient) by projected
/// gradient steps with halving backtracking; only steps that do not
/// decrease the objective are accepted. Stops once an accepted step
/// improves the objective by less than `tol`, or no step size helps.
pub fn projected_ascent<F, P>(
    start: Vec<f64>,
    mut objective: F,
    mut project: P,
    opts: &AscentOptions,
) -> AscentResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let mut x = project(&start);
    let (mut fx, mut gx) = objective(&x);
    let mut trace = vec![fx];
    let mut step = opts.step_size;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&gx).map(|(a, g)| a + step * g).collect();
            let cand = project(&trial);
            let (fc, gc) = objective(&cand);
            if fc.is_finite() && fc >= fx {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            converged = true;
            break;
        };
        let gain = fc - fx;
        x = cand;
        fx = fc;
        gx = gc;
        trace.push(fx);
        step *= opts.growth;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    AscentResult {
        point: x,
        value: fx,
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn projection_of_feasible_point_is_identity() {
        let m = [0.5, 0.25, 0.25];
        let v = [1.0, 1.0, 1.0];
        let a = project_nonneg_hyperplane(&v, &m).unwrap();
        for (x, y) in a.iter().zip(v) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_normal_coordinates_are_clipped_only() {
        let a = project_nonneg_hyperplane(&[-1.0, 3.0, 2.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(a, vec![0.0, 3.0, 1.0]);
        assert!(project_nonneg_hyperplane(&[1.0], &[0.0]).is_none());
    }

    proptest! {
        // KKT: the projection is feasible and beats random feasible points
        #[test]
        fn projection_is_feasible_and_closest(
            v in prop::collection::vec(-3.0f64..3.0, 1..8),
            seed in prop::collection::vec(0.01f64..2.0, 8),
            probe in prop::collection::vec(0.0f64..2.0, 8),
        ) {
            let m: Vec<f64> = seed[..v.len()].to_vec();
            let a = project_nonneg_hyperplane(&v, &m).unwrap();
            prop_assert!(a.iter().all(|&x| x >= 0.0));
            prop_assert!((dot(&a, &m) - 1.0).abs() < 1e-12);
            let mut z: Vec<f64> = probe[..v.len()].to_vec();
            let s = dot(&z, &m);
            prop_assume!(s > 1e-6);
            z.iter_mut().for_each(|x| *x /= s);
            let d = |p: &[f64]| p.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            prop_assert!(d(&a) <= d(&z) + 1e-9);
        }
    }

    #[test]
    fn ascent_maximizes_entropy_on_simplex() {
        // max Σ log a_i on the simplex is the uniform point
        let m = vec![1.0; 4];
        let start = vec![0.7, 0.1, 0.1, 0.1];
        let res = projected_ascent(
            start,
            |a| {
                let v = a.iter().map(|x| x.max(1e-300).ln()).sum();
                let g = a.iter().map(|x| 1.0 / x.max(1e-300)).collect();
                (v, g)
            },
            |v| project_nonneg_hyperplane(v, &m).unwrap(),
            &AscentOptions {
                step_size: 0.01,
                tol: 1e-14,
                ..Default::default()
            },
        );
        assert!(res.converged);
        for x in &res.point {
            assert!((x - 0.25).abs() < 1e-5, "{:?}", res.point);
        }
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
