//! Principal-component projection used for 2-D embedding plots.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid, Result};
use crate::linalg::{symmetric_eigen, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Components as rows, by decreasing variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

pub fn fit_pca(x: &Matrix, components: usize) -> Result<Pca> {
    let n = x.rows();
    let d = x.cols();
    if n < 2 || components == 0 || components > d {
        return Err(invalid("PCA needs two rows and 1..=dim components"));
    }
    let mut mean = vec![0.0; d];
    for r in x.row_iter() {
        crate::linalg::axpy(1.0, r, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(d, d);
    let mut z = vec![0.0; d];
    for r in x.row_iter() {
        for ((zi, v), m) in z.iter_mut().zip(r).zip(&mean) {
            *zi = v - m;
        }
        for a in 0..d {
            crate::linalg::axpy(z[a], &z, cov.row_mut(a));
        }
    }
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= (n - 1) as f64);
    let (vals, vecs) = symmetric_eigen(&cov)?;
    let mut comp = Matrix::zeros(components, d);
    for c in 0..components {
        // fix the sign so the largest loading is positive
        let mut col: Vec<f64> = (0..d).map(|i| vecs[(i, c)]).collect();
        let big = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if big < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        comp.row_mut(c).copy_from_slice(&col);
    }
    Ok(Pca { mean, components: comp, explained_variance: vals[..components].to_vec() })
}

impl Pca {
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.mean.len(), x.cols())?;
        let k = self.components.rows();
        let mut out = Matrix::zeros(x.rows(), k);
        let mut z = vec![0.0; self.mean.len()];
        for (i, r) in x.row_iter().enumerate() {
            for ((zi, v), m) in z.iter_mut().zip(r).zip(&self.mean) {
                *zi = v - m;
            }
            for c in 0..k {
                out[(i, c)] = crate::linalg::dot(self.components.row(c), &z);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_dominant_axis() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 0.01 * ((i * 7) % 3) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = fit_pca(&x, 1).unwrap();
        assert!((p.components[(0, 0)] - 1.0).abs() < 1e-3);
        let t = p.transform(&x).unwrap();
        assert!((t[(19, 0)] - t[(0, 0)] - 19.0).abs() < 1e-2);
    }
}
