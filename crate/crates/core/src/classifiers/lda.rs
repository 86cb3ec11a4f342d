//! Linear discriminant analysis with a shrunk pooled covariance.

use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::{softmax_rows, LabeledSet};
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaParams {
    pub shrinkage: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { shrinkage: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// Class means, `classes x dim`.
    pub means: Matrix,
    /// Regularised pooled covariance.
    pub covariance: Matrix,
    pub priors: Vec<f64>,
    /// Discriminant `x . coef[k] + intercept[k]`.
    pub coef: Matrix,
    pub intercept: Vec<f64>,
}

impl LdaModel {
    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.coef.cols(), x.cols())?;
        let k = self.coef.rows();
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, row) in x.row_iter().enumerate() {
            let o = out.row_mut(i);
            for c in 0..k {
                o[c] = dot(self.coef.row(c), row) + self.intercept[c];
            }
        }
        Ok(out)
    }

    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        let mut s = self.scores(x)?;
        softmax_rows(&mut s);
        Ok(s)
    }
}

pub(crate) fn fit(set: &LabeledSet, params: &LdaParams) -> Result<LdaModel> {
    if !(params.shrinkage >= 0.0) {
        return Err(invalid("shrinkage must be non-negative"));
    }
    let n = set.len();
    let k = set.classes;
    let d = set.dim();
    if n <= k {
        return Err(Error::Insufficient(alloc::format!("LDA needs more than {k} rows, got {n}")));
    }
    let counts = set.class_counts();
    let mut means = Matrix::zeros(k, d);
    for (row, &label) in set.x.row_iter().zip(&set.y) {
        crate::linalg::axpy(1.0, row, means.row_mut(label));
    }
    for c in 0..k {
        let inv = 1.0 / counts[c].max(1) as f64;
        means.row_mut(c).iter_mut().for_each(|v| *v *= inv);
    }
    let mut cov = Matrix::zeros(d, d);
    let mut centred = vec![0.0; d];
    for (row, &label) in set.x.row_iter().zip(&set.y) {
        for ((z, v), m) in centred.iter_mut().zip(row).zip(means.row(label)) {
            *z = v - m;
        }
        for a in 0..d {
            let za = centred[a];
            if za == 0.0 {
                continue;
            }
            let r = cov.row_mut(a);
            for b in 0..d {
                r[b] += za * centred[b];
            }
        }
    }
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= n as f64);
    let mut ridge = params.shrinkage * cov.trace() / d as f64;
    if !(ridge > 0.0) {
        ridge = params.shrinkage.max(1e-12);
    }
    for a in 0..d {
        cov[(a, a)] += ridge;
    }
    let chol = Cholesky::factor_with_jitter(&cov, 1e-10)?;
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let mut coef = Matrix::zeros(k, d);
    let mut intercept = vec![0.0; k];
    for c in 0..k {
        let sol = chol.solve(means.row(c));
        intercept[c] = -0.5 * dot(&sol, means.row(c)) + Float::ln(priors[c]);
        coef.row_mut(c).copy_from_slice(&sol);
    }
    Ok(LdaModel { means, covariance: cov, priors, coef, intercept })
}

pub fn train_lda(set: &LabeledSet, params: &LdaParams) -> Result<super::ClassifierModel> {
    super::train(set, &super::HyperParams::Lda(*params), 0, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn midpoint_of_symmetric_classes_is_a_tie() {
        let rows = [[-2.0, 1.0], [-2.0, -1.0], [-3.0, 0.0], [-1.0, 0.0], [2.0, 1.0], [2.0, -1.0], [3.0, 0.0], [1.0, 0.0]];
        let set = LabeledSet::new(Matrix::from_rows(&rows).unwrap(), vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap();
        let model = fit(&set, &LdaParams::default()).unwrap();
        let s = model.scores(&Matrix::from_rows(&[[0.0, 0.7]]).unwrap()).unwrap();
        assert!((s[(0, 0)] - s[(0, 1)]).abs() < 1e-9);
    }

    #[test]
    fn duplicating_rows_keeps_the_model() {
        let mut r = rng::seeded(4);
        let x = Matrix::from_vec(12, 2, (0..24).map(|_| rng::normal(&mut r)).collect()).unwrap();
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let set = LabeledSet::new(x.clone(), y.clone(), 3).unwrap();
        let idx: Vec<usize> = (0..12).chain(0..12).collect();
        let doubled = set.subset(&idx);
        let a = fit(&set, &LdaParams::default()).unwrap();
        let b = fit(&doubled, &LdaParams::default()).unwrap();
        for (u, v) in a.covariance.as_slice().iter().zip(b.covariance.as_slice()) {
            assert!((u - v).abs() < 1e-12);
        }
        for (u, v) in a.means.as_slice().iter().zip(b.means.as_slice()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_rows() {
        let set = LabeledSet::new(Matrix::from_rows(&[[0.0], [1.0]]).unwrap(), vec![0, 1], 2).unwrap();
        assert!(matches!(fit(&set, &LdaParams::default()), Err(Error::Insufficient(_))));
    }
}
