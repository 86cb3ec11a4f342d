//! One-hidden-layer ReLU network with a softmax output, trained by Adam on
//! seeded mini-batches.

use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::{softmax, LabeledSet};
use crate::error::{check_dim, invalid, Result};
use crate::linalg::{dot, Matrix};
use crate::optim::Adam;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpParams {
    pub hidden: usize,
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden: 70, l2: 0.0, epochs: 200, learning_rate: 1e-3, batch_size: 64 }
    }
}

impl MlpParams {
    pub fn new(hidden: usize, l2: f64) -> Self {
        Self { hidden, l2, ..Self::default() }
    }
}

/// Parameters are stored flat: `w1 (hidden x dim)`, `b1`, `w2 (classes x hidden)`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub params: Vec<f64>,
    /// Full-data objective after the last epoch.
    pub final_loss: f64,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl MlpModel {
    fn layout(&self) -> Layout {
        layout(self.dim, self.hidden, self.classes)
    }

    /// He-initialised network; biases start at zero.
    pub fn init(dim: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let l = layout(dim, hidden, classes);
        let mut params = vec![0.0; l.end];
        let mut r = rng::seeded(seed);
        let s1 = Float::sqrt(2.0 / dim.max(1) as f64);
        let s2 = Float::sqrt(2.0 / hidden.max(1) as f64);
        for v in &mut params[l.w1..l.b1] {
            *v = s1 * rng::normal(&mut r);
        }
        for v in &mut params[l.w2..l.b2] {
            *v = s2 * rng::normal(&mut r);
        }
        Self { dim, hidden, classes, params, final_loss: f64::NAN }
    }

    fn forward(&self, x: &[f64], h: &mut [f64], out: &mut [f64]) {
        let l = self.layout();
        let p = &self.params;
        for (u, hv) in h.iter_mut().enumerate() {
            let z = dot(&p[l.w1 + u * self.dim..l.w1 + (u + 1) * self.dim], x) + p[l.b1 + u];
            *hv = z.max(0.0);
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(&p[l.w2 + c * self.hidden..l.w2 + (c + 1) * self.hidden], h) + p[l.b2 + c];
        }
    }

    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.dim, x.cols())?;
        let mut out = Matrix::zeros(x.rows(), self.classes);
        let mut h = vec![0.0; self.hidden];
        for (i, row) in x.row_iter().enumerate() {
            let o = out.row_mut(i);
            self.forward(row, &mut h, o);
            softmax(o);
        }
        Ok(out)
    }

    /// Mean cross-entropy over `rows` plus `l2 ||W||^2 / 2`, and its
    /// gradient with respect to the flat parameters.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize], rows: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let l = self.layout();
        let p = &self.params;
        let mut grad = vec![0.0; l.end];
        let mut h = vec![0.0; self.hidden];
        let mut o = vec![0.0; self.classes];
        let mut dh = vec![0.0; self.hidden];
        let m = rows.len().max(1) as f64;
        let mut loss = 0.0;
        for &r in rows {
            let xr = x.row(r);
            self.forward(xr, &mut h, &mut o);
            let max = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + Float::ln(o.iter().map(|v| Float::exp(v - max)).sum::<f64>());
            loss += lse - o[y[r]];
            softmax(&mut o);
            o[y[r]] -= 1.0;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..self.classes {
                let g = o[c] / m;
                if g == 0.0 {
                    continue;
                }
                let w2 = &p[l.w2 + c * self.hidden..l.w2 + (c + 1) * self.hidden];
                let gw2 = &mut grad[l.w2 + c * self.hidden..l.w2 + (c + 1) * self.hidden];
                for u in 0..self.hidden {
                    gw2[u] += g * h[u];
                    dh[u] += g * w2[u];
                }
                grad[l.b2 + c] += g;
            }
            for u in 0..self.hidden {
                if h[u] <= 0.0 {
                    continue;
                }
                let g = dh[u];
                crate::linalg::axpy(g, xr, &mut grad[l.w1 + u * self.dim..l.w1 + (u + 1) * self.dim]);
                grad[l.b1 + u] += g;
            }
        }
        loss /= m;
        if l2 > 0.0 {
            for range in [l.w1..l.b1, l.w2..l.b2] {
                for i in range {
                    loss += 0.5 * l2 * p[i] * p[i];
                    grad[i] += l2 * p[i];
                }
            }
        }
        (loss, grad)
    }
}

fn layout(dim: usize, hidden: usize, classes: usize) -> Layout {
    let w1 = 0;
    let b1 = w1 + hidden * dim;
    let w2 = b1 + hidden;
    let b2 = w2 + classes * hidden;
    Layout { w1, b1, w2, b2, end: b2 + classes }
}

pub(crate) fn fit(set: &LabeledSet, params: &MlpParams, seed: u64) -> Result<MlpModel> {
    if params.hidden == 0 || params.epochs == 0 || params.batch_size == 0 {
        return Err(invalid("hidden width, epochs and batch size must be positive"));
    }
    if !(params.l2 >= 0.0 && params.learning_rate > 0.0) {
        return Err(invalid("l2 must be non-negative and learning rate positive"));
    }
    let mut model = MlpModel::init(set.dim(), params.hidden, set.classes, seed);
    let mut adam = Adam::new(model.params.len(), params.learning_rate);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut r = rng::derive(seed, 1);
    for _ in 0..params.epochs {
        rng::shuffle(&mut r, &mut order);
        for batch in order.chunks(params.batch_size) {
            let (_, grad) = model.loss_and_grad(&set.x, &set.y, batch, params.l2);
            adam.step(&mut model.params, &grad);
        }
    }
    let all: Vec<usize> = (0..set.len()).collect();
    model.final_loss = model.loss_and_grad(&set.x, &set.y, &all, params.l2).0;
    Ok(model)
}

pub fn train_mlp(set: &LabeledSet, params: &MlpParams, seed: u64) -> Result<super::ClassifierModel> {
    super::train(set, &super::HyperParams::Mlp(*params), seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = rng::seeded(21);
        let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng::normal(&mut r)).collect()).unwrap();
        let y = vec![0, 1, 2, 1];
        let mut model = MlpModel::init(3, 5, 3, 9);
        for v in model.params.iter_mut() {
            *v += 0.1 * rng::normal(&mut r);
        }
        let rows = [0, 1, 2, 3];
        let (_, g) = model.loss_and_grad(&x, &y, &rows, 0.2);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..model.params.len() {
            let mut p = model.clone();
            p.params[i] += h;
            let mut m = model.clone();
            m.params[i] -= h;
            let fd = (p.loss_and_grad(&x, &y, &rows, 0.2).0 - m.loss_and_grad(&x, &y, &rows, 0.2).0) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7));
        }
        assert!(worst < 1e-4, "relative error {worst}");
    }

    #[test]
    fn same_seed_same_loss() {
        let mut r = rng::seeded(2);
        let x = Matrix::from_vec(30, 2, (0..60).map(|_| rng::normal(&mut r)).collect()).unwrap();
        let y: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let set = LabeledSet::new(x, y, 2).unwrap();
        let p = MlpParams { epochs: 5, ..MlpParams::new(8, 0.1) };
        let a = fit(&set, &p, 4).unwrap();
        let b = fit(&set, &p, 4).unwrap();
        assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn separable_clusters() {
        let mut r = rng::seeded(3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..100 {
            let c = i % 2;
            let off = if c == 0 { -2.0 } else { 2.0 };
            rows.push([off + 0.5 * rng::normal(&mut r), off + 0.5 * rng::normal(&mut r)]);
            y.push(c);
        }
        let set = LabeledSet::new(Matrix::from_rows(&rows).unwrap(), y.clone(), 2).unwrap();
        let model = train_mlp(&set, &MlpParams::new(70, 0.0), 1).unwrap();
        let pred = model.predict(&set.x).unwrap().labels;
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 100.0;
        assert!(acc >= 0.99);
    }
}
