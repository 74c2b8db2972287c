//! Built-in source classifier: L2-regularized multinomial logistic
//! regression, plus ingestion of predictions made elsewhere.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{check_schemas, ColumnKind, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};

pub const DEFAULT_L2: f64 = 1e-4;
pub const DEFAULT_MAX_ITERS: usize = 2000;
/// Gradient norm below which training counts as converged.
pub const GRADIENT_TOL: f64 = 1e-4;

/// Maps raw rows to the design vector: intercept, one-hot codes of each
/// discrete column without its first category, standardized continuous
/// columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Encoder {
    schema: FeatureSchema,
    /// Per column: `(offset into the design vector, mean, scale)`.
    layout: Vec<(usize, f64, f64)>,
    width: usize,
}

impl Encoder {
    fn fit(ds: &TabularDataset) -> Self {
        let mut layout = Vec::new();
        let mut width = 1;
        for (j, col) in ds.schema().columns().iter().enumerate() {
            match col.kind {
                ColumnKind::Discrete { cardinality } => {
                    layout.push((width, 0.0, 1.0));
                    width += cardinality - 1;
                }
                ColumnKind::Continuous => {
                    let c = ds.rows().column(j);
                    let n = c.len().max(1) as f64;
                    let mean = c.sum() / n;
                    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                    layout.push((width, mean, scale));
                    width += 1;
                }
            }
        }
        Encoder {
            schema: ds.schema().clone(),
            layout,
            width,
        }
    }

    fn encode_into(&self, x: ArrayView1<'_, f64>, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        for (j, col) in self.schema.columns().iter().enumerate() {
            let (off, mean, scale) = self.layout[j];
            match col.kind {
                ColumnKind::Discrete { .. } => {
                    let code = x[j] as usize;
                    if code >= 2 {
                        out[off + code - 2] = 1.0;
                    }
                }
                ColumnKind::Continuous => out[off] = (x[j] - mean) / scale,
            }
        }
    }

    fn encode(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        self.encode_into(x, &mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    encoder: Encoder,
    /// `width × L` coefficients; row 0 is the intercept.
    coefficients: Array2<f64>,
    pub l2_lambda: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Distinct design rows with per-class row shares.
struct Grouped {
    design: Vec<Vec<f64>>,
    /// `shares[g][y]` = fraction of all rows in group `g` with label `y+1`.
    shares: Vec<Vec<f64>>,
}

fn group_rows(enc: &Encoder, ds: &TabularDataset, labels: &[usize], l: usize) -> Grouped {
    let n = ds.len() as f64;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut design = Vec::new();
    let mut shares: Vec<Vec<f64>> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        let v = enc.encode(ds.row(i));
        let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
        let g = *index.entry(key).or_insert_with(|| {
            design.push(v);
            shares.push(vec![0.0; l]);
            design.len() - 1
        });
        shares[g][y - 1] += 1.0 / n;
    }
    Grouped { design, shares }
}

fn softmax_into(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

fn scores(w: &[f64], x: &[f64], l: usize) -> Vec<f64> {
    let mut out = vec![0.0; l];
    for (p, &xp) in x.iter().enumerate() {
        if xp == 0.0 {
            continue;
        }
        for (y, o) in out.iter_mut().enumerate() {
            *o += xp * w[p * l + y];
        }
    }
    out
}

/// Mean cross-entropy plus `λ/2 ‖W‖²` over non-intercept rows, and its
/// gradient. Coefficients are flattened row-major (`p * L + y`).
fn loss_and_gradient(g: &Grouped, w: &[f64], l: usize, lambda: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (x, share) in g.design.iter().zip(&g.shares) {
        let total: f64 = share.iter().sum();
        let mut s = scores(w, x, l);
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for y in 0..l {
            loss += share[y] * (lse - s[y]);
        }
        softmax_into(&mut s);
        for (p, &xp) in x.iter().enumerate() {
            if xp == 0.0 {
                continue;
            }
            for y in 0..l {
                grad[p * l + y] += xp * (total * s[y] - share[y]);
            }
        }
    }
    for (i, &wi) in w.iter().enumerate().skip(l) {
        loss += 0.5 * lambda * wi * wi;
        grad[i] += lambda * wi;
    }
    (loss, grad)
}

/// Trains by diagonally preconditioned gradient descent with Armijo
/// backtracking, starting from zero.
pub fn train_logistic(ds: &TabularDataset, l2_lambda: f64, max_iters: usize) -> Result<LogisticModel> {
    let labels = ds.require_labels()?;
    let l = ds.schema().label_cardinality();
    if ds.len() < l {
        return Err(Error::InvalidDataset(format!(
            "need at least {l} rows to train, got {}",
            ds.len()
        )));
    }
    if !(l2_lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("l2 lambda {l2_lambda} < 0")));
    }
    let enc = Encoder::fit(ds);
    let grouped = group_rows(&enc, ds, labels, l);
    let mut w = vec![0.0; enc.width * l];
    // Diagonal preconditioner from a bound on the Hessian diagonal, so the
    // unpenalized intercept and heavily penalized slopes move at comparable
    // rates.
    let mut precond = vec![0.0; w.len()];
    for (x, share) in grouped.design.iter().zip(&grouped.shares) {
        let total: f64 = share.iter().sum();
        for (p, &xp) in x.iter().enumerate() {
            for y in 0..l {
                precond[p * l + y] += 0.25 * total * xp * xp;
            }
        }
    }
    for (i, d) in precond.iter_mut().enumerate() {
        let reg = if i >= l { l2_lambda } else { 0.0 };
        *d = 1.0 / (*d + reg).max(1e-12);
    }
    let (mut loss, mut grad) = loss_and_gradient(&grouped, &w, l, l2_lambda);
    let mut step = 1.0;
    let mut iterations = 0;
    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    while iterations < max_iters && norm(&grad) > GRADIENT_TOL {
        iterations += 1;
        let dir: Vec<f64> = grad.iter().zip(&precond).map(|(g, d)| g * d).collect();
        let decrease: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(a, d)| a - step * d).collect();
            let (tl, tg) = loss_and_gradient(&grouped, &trial, l, l2_lambda);
            if tl <= loss - 0.5 * step * decrease {
                w = trial;
                loss = tl;
                grad = tg;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(16.0);
    }
    let gradient_norm = norm(&grad);
    let converged = gradient_norm <= GRADIENT_TOL;
    if !converged {
        log::warn!("logistic regression stopped with gradient norm {gradient_norm:e}");
    }
    Ok(LogisticModel {
        coefficients: Array2::from_shape_vec((enc.width, l), w).expect("shape"),
        encoder: enc,
        l2_lambda,
        iterations,
        gradient_norm,
        converged,
    })
}

impl LogisticModel {
    pub fn num_classes(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    /// Class probabilities for one raw feature row.
    pub fn predict_proba_row(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let v = self.encoder.encode(x);
        let w = self.coefficients.as_slice().expect("standard layout");
        let mut s = scores(w, &v, self.num_classes());
        softmax_into(&mut s);
        s
    }

    /// Training objective at the fitted coefficients, evaluated on `ds`.
    pub fn loss(&self, ds: &TabularDataset) -> Result<f64> {
        let labels = ds.require_labels()?;
        let g = group_rows(&self.encoder, ds, labels, self.num_classes());
        let w = self.coefficients.as_slice().expect("standard layout");
        Ok(loss_and_gradient(&g, w, self.num_classes(), self.l2_lambda).0)
    }
}

/// Lowest class index among the maxima, 1-based.
pub fn argmax_class(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best + 1
}

/// Attaches hard predictions and class probabilities to `ds`.
pub fn predict(model: &LogisticModel, ds: &TabularDataset) -> Result<TabularDataset> {
    check_schemas(&model.encoder.schema, ds.schema())?;
    let l = model.num_classes();
    let mut probs = Array2::zeros((ds.len(), l));
    let mut preds = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let p = model.predict_proba_row(ds.row(i));
        preds.push(argmax_class(&p));
        probs.row_mut(i).assign(&ArrayView1::from(&p[..]));
    }
    ds.clone().with_predictions(preds)?.with_pred_probs(probs)
}

/// Attaches predictions from a CSV file with header `pred,p_1,...,p_L`,
/// one row per dataset row in order. Probability rows off the simplex by
/// more than 1e-6 are renormalized with a warning.
pub fn load_predictions(ds: &TabularDataset, path: &Path) -> Result<TabularDataset> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let l = ds.schema().label_cardinality();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let expected: Vec<String> = std::iter::once("pred".to_string())
        .chain((1..=l).map(|c| format!("p_{c}")))
        .collect();
    if header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("header must be {}", expected.join(",")),
        });
    }
    let mut preds = Vec::new();
    let mut probs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != l + 1 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", l + 1, rec.len()),
            });
        }
        let bad = |reason: String| Error::MalformedRow { line, reason };
        let pred: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("prediction {:?} is not a class code", &rec[0])))?;
        if pred < 1 || pred > l {
            return Err(bad(format!("prediction {pred} outside 1..={l}")));
        }
        let mut row = Vec::with_capacity(l);
        for field in rec.iter().skip(1) {
            let p: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("probability {field:?} is not a number")))?;
            if !(p >= 0.0) || !p.is_finite() {
                return Err(bad(format!("probability {p} is negative or not finite")));
            }
            row.push(p);
        }
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0) {
            return Err(bad("probabilities sum to zero".into()));
        }
        if (sum - 1.0).abs() > 1e-6 {
            log::warn!("line {line}: probabilities sum to {sum}; renormalizing");
        }
        row.iter_mut().for_each(|p| *p /= sum);
        preds.push(pred);
        probs.extend(row);
    }
    if preds.len() != ds.len() {
        return Err(Error::RowCountMismatch {
            expected: ds.len(),
            found: preds.len(),
        });
    }
    let probs = Array2::from_shape_vec((ds.len(), l), probs).expect("shape");
    ds.clone().with_predictions(preds)?.with_pred_probs(probs)
}

/// Finite-difference access for tests of the training gradient.
#[doc(hidden)]
pub fn training_loss_and_gradient(
    ds: &TabularDataset,
    coefficients: &[f64],
    l2_lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let labels = ds.require_labels()?;
    let l = ds.schema().label_cardinality();
    let enc = Encoder::fit(ds);
    if coefficients.len() != enc.width * l {
        return Err(Error::InvalidConfig("coefficient length mismatch".into()));
    }
    let g = group_rows(&enc, ds, labels, l);
    Ok(loss_and_gradient(&g, coefficients, l, l2_lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use ndarray::array;
    use std::io::Write;

    fn separable() -> TabularDataset {
        let schema = FeatureSchema::new(vec![Column::continuous("x")], 2).unwrap();
        let rows = array![[-2.0], [-1.5], [-1.0], [-0.5], [0.5], [1.0], [1.5], [2.0]];
        TabularDataset::new(schema, rows)
            .unwrap()
            .with_labels(vec![1, 1, 1, 1, 2, 2, 2, 2])
            .unwrap()
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let ds = separable();
        let m = train_logistic(&ds, 1e-4, DEFAULT_MAX_ITERS).unwrap();
        let out = predict(&m, &ds).unwrap();
        assert_eq!(out.accuracy().unwrap(), 1.0);
    }

    #[test]
    fn heavy_penalty_gives_class_prior() {
        let schema = FeatureSchema::all_discrete(&[2], 2).unwrap();
        let rows: Vec<Vec<usize>> = (0..10).map(|i| vec![1 + i % 2]).collect();
        let labels = vec![1, 1, 1, 2, 2, 2, 2, 2, 2, 2];
        let ds = TabularDataset::from_discrete_rows(schema, &rows, Some(labels)).unwrap();
        let m = train_logistic(&ds, 1e6, DEFAULT_MAX_ITERS).unwrap();
        let out = predict(&m, &ds).unwrap();
        for row in out.pred_probs().unwrap().outer_iter() {
            assert!((row[0] - 0.3).abs() < 1e-4, "{row}");
        }
        assert!(out.predictions().unwrap().iter().all(|&f| f == 2));
    }

    #[test]
    fn probabilities_are_row_stochastic_and_deterministic() {
        let ds = separable();
        let m = train_logistic(&ds, 1e-2, 200).unwrap();
        let a = predict(&m, &ds).unwrap();
        let b = predict(&m, &ds).unwrap();
        assert_eq!(a, b);
        for row in a.pred_probs().unwrap().outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_go_to_lowest_class() {
        assert_eq!(argmax_class(&[0.5, 0.5]), 1);
        assert_eq!(argmax_class(&[0.2, 0.4, 0.4]), 2);
    }

    #[test]
    fn predict_rejects_other_schema() {
        let m = train_logistic(&separable(), 1e-2, 10).unwrap();
        let other = FeatureSchema::all_discrete(&[2], 2).unwrap();
        let ds = TabularDataset::from_discrete_rows(other, &[vec![1]], None).unwrap();
        assert!(matches!(predict(&m, &ds), Err(Error::SchemaMismatch { .. })));
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn two_rows() -> TabularDataset {
        let schema = FeatureSchema::all_discrete(&[2], 2).unwrap();
        TabularDataset::from_discrete_rows(schema, &[vec![1], vec![2]], None).unwrap()
    }

    #[test]
    fn prediction_file_is_attached() {
        let f = write("pred,p_1,p_2\n1,0.9,0.1\n2,0.25,0.75\n");
        let ds = load_predictions(&two_rows(), f.path()).unwrap();
        assert_eq!(ds.predictions().unwrap(), &[1, 2]);
        assert_eq!(ds.pred_probs().unwrap()[[1, 1]], 0.75);
    }

    #[test]
    fn short_prediction_file_is_rejected() {
        let f = write("pred,p_1,p_2\n1,0.9,0.1\n");
        assert!(matches!(
            load_predictions(&two_rows(), f.path()),
            Err(Error::RowCountMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn off_simplex_rows_are_renormalized() {
        let f = write("pred,p_1,p_2\n1,0.6,0.5\n2,0.5,0.5\n");
        let ds = load_predictions(&two_rows(), f.path()).unwrap();
        let p = ds.pred_probs().unwrap();
        assert!((p[[0, 0]] - 6.0 / 11.0).abs() < 1e-15);
        assert!((p[[0, 1]] - 5.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write("pred,p_1,p_2\n1,0.5,0.5\n3,0.5,0.5\n");
        assert!(matches!(
            load_predictions(&two_rows(), f.path()),
            Err(Error::MalformedRow { line: 3, .. })
        ));
    }
}
