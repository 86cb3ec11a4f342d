//! One-vs-rest kernel SVM. Each binary problem is solved by SMO with
//! second-order working-set selection; all problems share one kernel
//! matrix.

use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::LabeledSet;
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub kernel: Kernel,
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: 1.0, kernel: Kernel::Rbf, tol: 1e-3 }
    }
}

impl SvmParams {
    pub fn rbf(c: f64, gamma: f64) -> Self {
        Self { c, gamma, ..Self::default() }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kernel {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf => {
                let mut s = 0.0;
                for (x, y) in a.iter().zip(b) {
                    s += (x - y) * (x - y);
                }
                Float::exp(-self.gamma * s)
            }
        }
    }
}

/// Dense kernel matrix over the training rows.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(x: &Matrix, params: &SvmParams) -> Self {
        let n = x.rows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = params.eval(x.row(i), x.row(j));
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, values }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Dual solution of one binary problem with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

impl BinarySolution {
    /// `sum_j alpha_j y_j K(x_j, x_i) - rho` for every training row.
    pub fn training_decisions(&self, k: &KernelMatrix, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        (0..n)
            .map(|i| {
                let r = k.row(i);
                (0..n).map(|j| self.alpha[j] * y[j] * r[j]).sum::<f64>() - self.rho
            })
            .collect()
    }
}

/// Largest KKT violation of a binary dual solution.
pub fn kkt_violation(k: &KernelMatrix, y: &[f64], sol: &BinarySolution, c: f64) -> f64 {
    let f = sol.training_decisions(k, y);
    let bound = 1e-12 * c.max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..y.len() {
        let m = y[i] * f[i] - 1.0;
        let a = sol.alpha[i];
        let v = if a <= bound {
            (-m).max(0.0)
        } else if a >= c - bound {
            m.max(0.0)
        } else {
            m.abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `0 <= a <= c`, `y'a = 0`.
pub fn smo_binary(k: &KernelMatrix, y: &[f64], c: f64, tol: f64) -> Result<BinarySolution> {
    let n = y.len();
    check_dim(k.n, n)?;
    let max_iters = 10_000usize.saturating_mul(n).max(100_000);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let tau = 1e-12;
    let upper = |a: f64, yi: f64| if yi > 0.0 { a < c } else { a > 0.0 };
    let lower = |a: f64, yi: f64| if yi > 0.0 { a > 0.0 } else { a < c };
    let mut iterations = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if upper(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        if i_sel != usize::MAX {
            let ki = k.row(i_sel);
            for t in 0..n {
                if !lower(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = ki[i_sel] + k.get(t, t) - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = tau;
                    }
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax - gmin < tol {
            break;
        }
        if iterations >= max_iters {
            return Err(Error::NoConvergence(iterations));
        }
        iterations += 1;
        let (i, j) = (i_sel, j_sel);
        let (yi, yj) = (y[i], y[j]);
        let (oi, oj) = (alpha[i], alpha[j]);
        let mut quad = k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j);
        if quad <= 0.0 {
            quad = tau;
        }
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = oi - oj;
            let (mut ai, mut aj) = (oi + delta, oj + delta);
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
            alpha[i] = ai;
            alpha[j] = aj;
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = oi + oj;
            let (mut ai, mut aj) = (oi - delta, oj + delta);
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            alpha[i] = ai;
            alpha[j] = aj;
        }
        let di = alpha[i] - oi;
        let dj = alpha[j] - oj;
        let (ki, kj) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
    }

    // offset from free vectors, else the midpoint of the feasible range
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if at_lower {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    Ok(BinarySolution { alpha, rho, iterations })
}

/// Support vectors shared by all one-vs-rest machines.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub params: SvmParams,
    pub support: Matrix,
    /// `classes x support` matrix of `alpha * y`.
    pub coef: Matrix,
    pub rho: Vec<f64>,
}

impl SvmModel {
    pub fn decision_values(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.support.cols(), x.cols())?;
        let k = self.coef.rows();
        let m = self.support.rows();
        let mut out = Matrix::zeros(x.rows(), k);
        let mut kv = vec![0.0; m];
        for (i, row) in x.row_iter().enumerate() {
            for (s, v) in kv.iter_mut().enumerate() {
                *v = self.params.eval(self.support.row(s), row);
            }
            let o = out.row_mut(i);
            for c in 0..k {
                o[c] = dot(self.coef.row(c), &kv) - self.rho[c];
            }
        }
        Ok(out)
    }
}

/// One binary problem per class, each `class vs rest`.
pub fn solve_one_vs_rest(set: &LabeledSet, params: &SvmParams) -> Result<(KernelMatrix, Vec<BinarySolution>)> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(invalid("SVM C must be positive"));
    }
    if params.kernel == Kernel::Rbf && !(params.gamma > 0.0 && params.gamma.is_finite()) {
        return Err(invalid("RBF gamma must be positive"));
    }
    let km = KernelMatrix::new(&set.x, params);
    let mut sols = Vec::with_capacity(set.classes);
    for c in 0..set.classes {
        let y: Vec<f64> = set.y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        sols.push(smo_binary(&km, &y, params.c, params.tol)?);
    }
    Ok((km, sols))
}

pub(crate) fn fit(set: &LabeledSet, params: &SvmParams) -> Result<SvmModel> {
    let (_, sols) = solve_one_vs_rest(set, params)?;
    let sv: Vec<usize> = (0..set.len()).filter(|&i| sols.iter().any(|s| s.alpha[i] > 0.0)).collect();
    let mut coef = Matrix::zeros(set.classes, sv.len());
    for (c, sol) in sols.iter().enumerate() {
        for (s, &i) in sv.iter().enumerate() {
            let y = if set.y[i] == c { 1.0 } else { -1.0 };
            coef[(c, s)] = sol.alpha[i] * y;
        }
    }
    Ok(SvmModel {
        params: *params,
        support: set.x.select_rows(&sv),
        coef,
        rho: sols.iter().map(|s| s.rho).collect(),
    })
}

pub fn train_svm(set: &LabeledSet, params: &SvmParams) -> Result<super::ClassifierModel> {
    super::train(set, &super::HyperParams::Svm(*params), 0, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn separable() -> LabeledSet {
        let mut r = rng::seeded(5);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let off = if c == 0 { -2.0 } else { 2.0 };
            rows.push([off + 0.4 * rng::normal(&mut r), 0.4 * rng::normal(&mut r)]);
            y.push(c);
        }
        LabeledSet::new(Matrix::from_rows(&rows).unwrap(), y, 2).unwrap()
    }

    #[test]
    fn separable_duals_respect_constraints() {
        let set = separable();
        let params = SvmParams::rbf(10.0, 1.0);
        let (km, sols) = solve_one_vs_rest(&set, &params).unwrap();
        for (c, sol) in sols.iter().enumerate() {
            let y: Vec<f64> = set.y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            assert!(sol.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
            let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            assert!(eq.abs() <= 1e-6, "{eq}");
            assert!(kkt_violation(&km, &y, sol, 10.0) <= 1e-3);
        }
        let model = fit(&set, &params).unwrap();
        let pred: Vec<usize> = model.decision_values(&set.x).unwrap().row_iter().map(super::super::argmax).collect();
        assert_eq!(pred, set.y);
    }

    #[test]
    fn rbf_solves_xor() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let set = LabeledSet::new(x, vec![0, 0, 1, 1], 2).unwrap();
        let model = fit(&set, &SvmParams::rbf(10.0, 1.0)).unwrap();
        let pred: Vec<usize> = model.decision_values(&set.x).unwrap().row_iter().map(super::super::argmax).collect();
        assert_eq!(pred, set.y);
    }

    #[test]
    fn linear_kernel_flag() {
        let set = separable();
        let params = SvmParams { kernel: Kernel::Linear, ..SvmParams::rbf(1.0, 1.0) };
        let model = fit(&set, &params).unwrap();
        let pred: Vec<usize> = model.decision_values(&set.x).unwrap().row_iter().map(super::super::argmax).collect();
        assert_eq!(pred, set.y);
    }
}
