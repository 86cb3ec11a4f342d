//! Multinomial logistic regression with an elastic-net penalty, fitted by
//! proximal gradient descent with backtracking.

use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::{softmax, softmax_rows, LabeledSet};
use crate::error::{check_dim, invalid, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegParams {
    /// Inverse regularisation strength.
    pub c: f64,
    pub l1: f64,
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self { c: 1.0, l1: 0.0, l2: 0.0, max_iters: 2000, tol: 1e-6 }
    }
}

impl LogRegParams {
    pub fn new(c: f64, l1: f64, l2: f64) -> Self {
        Self { c, l1, l2, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("regularisation C must be positive"));
        }
        if !(self.l1 >= 0.0 && self.l2 >= 0.0) {
            return Err(invalid("penalties must be non-negative"));
        }
        Ok(())
    }
}

/// Weights are `classes x dim`; the bias is not penalised.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final value of the full (smooth + l1) objective.
    pub objective: f64,
}

impl LogRegModel {
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.weights.cols(), x.cols())?;
        let k = self.weights.rows();
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, row) in x.row_iter().enumerate() {
            let o = out.row_mut(i);
            for c in 0..k {
                o[c] = crate::linalg::dot(self.weights.row(c), row) + self.bias[c];
            }
        }
        Ok(out)
    }

    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        let mut p = self.logits(x)?;
        softmax_rows(&mut p);
        Ok(p)
    }
}

/// Mean cross-entropy plus the ridge part of the penalty, with its
/// gradient with respect to the weights and the bias.
pub fn smooth_objective(
    set: &LabeledSet,
    params: &LogRegParams,
    weights: &Matrix,
    bias: &[f64],
) -> (f64, Matrix, Vec<f64>) {
    let k = set.classes;
    let d = set.dim();
    let n = set.len().max(1) as f64;
    let mut gw = Matrix::zeros(k, d);
    let mut gb = vec![0.0; k];
    let mut loss = 0.0;
    let mut p = vec![0.0; k];
    for (row, &label) in set.x.row_iter().zip(&set.y) {
        for c in 0..k {
            p[c] = crate::linalg::dot(weights.row(c), row) + bias[c];
        }
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + Float::ln(p.iter().map(|v| Float::exp(v - max)).sum::<f64>());
        loss += lse - p[label];
        softmax(&mut p);
        p[label] -= 1.0;
        for c in 0..k {
            crate::linalg::axpy(p[c] / n, row, gw.row_mut(c));
            gb[c] += p[c] / n;
        }
    }
    loss /= n;
    let ridge = params.l2 / params.c;
    if ridge > 0.0 {
        let mut sq = 0.0;
        for (g, w) in gw.as_mut_slice().iter_mut().zip(weights.as_slice()) {
            sq += w * w;
            *g += ridge * w;
        }
        loss += 0.5 * ridge * sq;
    }
    (loss, gw, gb)
}

fn l1_term(params: &LogRegParams, w: &Matrix) -> f64 {
    params.l1 / params.c * w.as_slice().iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) fn fit(set: &LabeledSet, params: &LogRegParams) -> Result<LogRegModel> {
    params.validate()?;
    let k = set.classes;
    let d = set.dim();
    let lasso = params.l1 / params.c;
    let mut w = Matrix::zeros(k, d);
    let mut b = vec![0.0; k];
    let (mut f, mut gw, mut gb) = smooth_objective(set, params, &w, &b);
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let mut nw = w.clone();
            for (v, g) in nw.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *v = soft_threshold(*v - step * g, step * lasso);
            }
            let nb: Vec<f64> = b.iter().zip(&gb).map(|(v, g)| v - step * g).collect();
            // sufficient decrease against the quadratic model at `step`
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((a, o), g) in nw.as_slice().iter().zip(w.as_slice()).zip(gw.as_slice()) {
                lin += g * (a - o);
                sq += (a - o) * (a - o);
            }
            for ((a, o), g) in nb.iter().zip(&b).zip(&gb) {
                lin += g * (a - o);
                sq += (a - o) * (a - o);
            }
            let (nf, ngw, ngb) = smooth_objective(set, params, &nw, &nb);
            if nf <= f + lin + sq / (2.0 * step) + 1e-12 * f.abs() {
                accepted = Some((nw, nb, nf, ngw, ngb, sq));
                break;
            }
            step *= 0.5;
        }
        let Some((nw, nb, nf, ngw, ngb, sq)) = accepted else {
            break;
        };
        let mapping_norm = sq.sqrt() / step;
        w = nw;
        b = nb;
        f = nf;
        gw = ngw;
        gb = ngb;
        if mapping_norm < params.tol {
            converged = true;
            break;
        }
        step *= 1.25;
    }
    let objective = f + l1_term(params, &w);
    Ok(LogRegModel { weights: w, bias: b, iterations, converged, objective })
}

/// Trains on `set` after standardisation; see [`super::train`].
pub fn train_logreg(set: &LabeledSet, params: &LogRegParams) -> Result<super::ClassifierModel> {
    super::train(set, &super::HyperParams::LogReg(*params), 0, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_set(n: usize, d: usize, k: usize, seed: u64) -> LabeledSet {
        let mut r = rng::seeded(seed);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng::normal(&mut r)).collect()).unwrap();
        let y = (0..n).map(|i| i % k).collect();
        LabeledSet::new(x, y, k).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let set = random_set(5, 4, 3, 7);
        let params = LogRegParams::new(0.5, 0.0, 0.3);
        let mut r = rng::seeded(8);
        let w = Matrix::from_vec(3, 4, (0..12).map(|_| rng::normal(&mut r)).collect()).unwrap();
        let b: Vec<f64> = (0..3).map(|_| rng::normal(&mut r)).collect();
        let (_, gw, gb) = smooth_objective(&set, &params, &w, &b);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for idx in 0..12 {
            let mut wp = w.clone();
            wp.as_mut_slice()[idx] += h;
            let mut wm = w.clone();
            wm.as_mut_slice()[idx] -= h;
            let fd = (smooth_objective(&set, &params, &wp, &b).0 - smooth_objective(&set, &params, &wm, &b).0)
                / (2.0 * h);
            let a = gw.as_slice()[idx];
            worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-8));
        }
        for idx in 0..3 {
            let mut bp = b.clone();
            bp[idx] += h;
            let mut bm = b.clone();
            bm[idx] -= h;
            let fd = (smooth_objective(&set, &params, &w, &bp).0 - smooth_objective(&set, &params, &w, &bm).0)
                / (2.0 * h);
            worst = worst.max((fd - gb[idx]).abs() / fd.abs().max(gb[idx].abs()).max(1e-8));
        }
        assert!(worst < 1e-5, "relative error {worst}");
    }

    #[test]
    fn crushing_l1_zeroes_weights() {
        let mut set = random_set(30, 3, 3, 1);
        set.y[0] = 0;
        set.y[1] = 0;
        set.y[2] = 0;
        let model = fit(&set, &LogRegParams::new(1e-7, 1.0, 0.0)).unwrap();
        assert!(model.weights.as_slice().iter().all(|v| v.abs() <= 1e-6));
        let p = model.probabilities(&set.x).unwrap();
        let counts = set.class_counts();
        let majority = super::super::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        for row in p.row_iter() {
            assert_eq!(super::super::argmax(row), majority);
        }
    }

    #[test]
    fn separable_clusters_fit_perfectly() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut r = rng::seeded(3);
        for i in 0..40 {
            let c = i % 2;
            let off = if c == 0 { -3.0 } else { 3.0 };
            rows.push([off + 0.5 * rng::normal(&mut r), off + 0.5 * rng::normal(&mut r)]);
            y.push(c);
        }
        let set = LabeledSet::new(Matrix::from_rows(&rows).unwrap(), y.clone(), 2).unwrap();
        let model = train_logreg(&set, &LogRegParams::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(model.predict(&set.x).unwrap().labels, y);
    }

    #[test]
    fn weak_penalty_reaches_maximum_likelihood() {
        let set = random_set(60, 3, 3, 11);
        let model = fit(&set, &LogRegParams::new(1e7, 0.0, 0.0)).unwrap();
        // long plain gradient descent as a reference fit
        let params = LogRegParams::new(1e7, 0.0, 0.0);
        let mut w = Matrix::zeros(3, 3);
        let mut b = vec![0.0; 3];
        for _ in 0..200_000 {
            let (_, gw, gb) = smooth_objective(&set, &params, &w, &b);
            crate::linalg::axpy(-0.5, gw.as_slice(), w.as_mut_slice());
            crate::linalg::axpy(-0.5, &gb, &mut b);
        }
        let reference = smooth_objective(&set, &params, &w, &b).0;
        assert!((model.objective - reference).abs() < 1e-3, "{} vs {}", model.objective, reference);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let set = random_set(20, 3, 4, 2);
        let model = train_logreg(&set, &LogRegParams::new(1.0, 0.1, 0.1)).unwrap();
        let p = model.predict(&set.x).unwrap().probabilities.unwrap();
        for row in p.row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
