//! Diagonal-covariance Gaussian mixture (universal background model)
//! trained by EM from k-means++ seeds.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Smallest mixture weight kept after each M-step.
pub const WEIGHT_FLOOR: f64 = 1e-6;
/// Per-dimension variance floor as a fraction of the global variance.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-4;
pub const KMEANS_ITERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    pub weights: Vec<f64>,
    /// `C × D`
    pub means: Matrix,
    /// `C × D`
    pub variances: Matrix,
}

impl DiagGmm {
    pub fn new(weights: Vec<f64>, means: Matrix, variances: Matrix) -> Result<Self> {
        check_dim(weights.len(), means.rows())?;
        check_dim(means.rows(), variances.rows())?;
        check_dim(means.cols(), variances.cols())?;
        if variances.as_slice().iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("variances must be positive"));
        }
        if !means.is_finite() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFinite("GMM parameters"));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    fn log_norm_consts(&self) -> Vec<f64> {
        let d = self.dim() as f64;
        (0..self.num_components())
            .map(|c| {
                let log_det: f64 = self.variances.row(c).iter().map(|v| v.ln()).sum();
                self.weights[c].ln() - 0.5 * (d * (2.0 * PI).ln() + log_det)
            })
            .collect()
    }

    /// Per-component `ln(w_c · N(x | μ_c, Σ_c))` into `out`.
    fn joint_log_probs(&self, consts: &[f64], x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let q: f64 = x
                .iter()
                .zip(self.means.row(c))
                .zip(self.variances.row(c))
                .map(|((xi, mi), vi)| (xi - mi) * (xi - mi) / vi)
                .sum();
            *o = consts[c] - 0.5 * q;
        }
    }

    /// Mean per-frame log-likelihood.
    pub fn mean_log_likelihood(&self, frames: &Matrix) -> Result<f64> {
        check_dim(self.dim(), frames.cols())?;
        let consts = self.log_norm_consts();
        let mut lp = vec![0.0; self.num_components()];
        let mut acc = NeumaierSum::default();
        for x in frames.row_iter() {
            self.joint_log_probs(&consts, x, &mut lp);
            acc.add(log_sum_exp(&lp));
        }
        Ok(acc.value() / frames.rows().max(1) as f64)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Compensated summation; keeps long likelihood sums order-stable.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Component responsibilities for one frame, via log-sum-exp.
pub fn posteriors(gmm: &DiagGmm, frame: &[f64]) -> Result<Vec<f64>> {
    check_dim(gmm.dim(), frame.len())?;
    let consts = gmm.log_norm_consts();
    let mut lp = vec![0.0; gmm.num_components()];
    gmm.joint_log_probs(&consts, frame, &mut lp);
    let z = log_sum_exp(&lp);
    Ok(lp.iter().map(|l| (l - z).exp()).collect())
}

/// Reusable posterior evaluator that caches the per-component constants.
pub struct PosteriorEvaluator<'a> {
    gmm: &'a DiagGmm,
    consts: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> PosteriorEvaluator<'a> {
    pub fn new(gmm: &'a DiagGmm) -> Self {
        Self { gmm, consts: gmm.log_norm_consts(), scratch: vec![0.0; gmm.num_components()] }
    }

    /// Writes responsibilities into `out` and returns the frame log-likelihood.
    pub fn eval(&mut self, frame: &[f64], out: &mut [f64]) -> f64 {
        self.gmm.joint_log_probs(&self.consts, frame, &mut self.scratch);
        let z = log_sum_exp(&self.scratch);
        for (o, l) in out.iter_mut().zip(&self.scratch) {
            *o = (l - z).exp();
        }
        z
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations; returns `C × D` means.
pub fn kmeans_init(frames: &Matrix, components: usize, seed: u64) -> Result<Matrix> {
    let n = frames.rows();
    if components == 0 {
        return Err(invalid("need at least one component"));
    }
    if n < components {
        return Err(Error::Insufficient(alloc::format!(
            "{n} frames for {components} clusters"
        )));
    }
    let mut r = rng::seeded(seed);
    let mut chosen = vec![rng::below(&mut r, n)];
    let mut dist: Vec<f64> = frames.row_iter().map(|x| sq_dist(x, frames.row(chosen[0]))).collect();
    while chosen.len() < components {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng::uniform(&mut r) * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // guard against landing on a zero-distance tail through rounding
            if dist[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| dist[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng::below(&mut r, free.len())]
        };
        chosen.push(next);
        let c = frames.row(next);
        for (d, x) in dist.iter_mut().zip(frames.row_iter()) {
            *d = d.min(sq_dist(x, c));
        }
    }
    let mut means = frames.select_rows(&chosen);
    let dim = frames.cols();
    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_ITERS {
        for (a, x) in assign.iter_mut().zip(frames.row_iter()) {
            let mut best = (f64::INFINITY, 0);
            for c in 0..components {
                let d = sq_dist(x, means.row(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            *a = best.1;
        }
        let mut sums = Matrix::zeros(components, dim);
        let mut counts = vec![0usize; components];
        for (&a, x) in assign.iter().zip(frames.row_iter()) {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..components {
            if counts[c] > 0 {
                for (m, s) in means.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *m = s / counts[c] as f64;
                }
            }
        }
    }
    Ok(means)
}

/// Result of [`em_fit`]: the model and the mean per-frame log-likelihood
/// evaluated before each M-step plus once at the end.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub gmm: DiagGmm,
    pub log_likelihoods: Vec<f64>,
}

fn global_variance(frames: &Matrix) -> Vec<f64> {
    let n = frames.rows() as f64;
    let d = frames.cols();
    let mut mean = vec![0.0; d];
    for x in frames.row_iter() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for x in frames.row_iter() {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    var
}

/// Maximises `Σ N_c ln w_c` subject to `Σ w = 1`, `w_c ≥ floor`.
fn floored_weights(occupancy: &[f64], floor: f64) -> Vec<f64> {
    let c = occupancy.len();
    let mut pinned = vec![false; c];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass = 1.0 - floor * n_pinned as f64;
        let free_occ: f64 = occupancy.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(o, _)| o).sum();
        let w: Vec<f64> = occupancy
            .iter()
            .zip(&pinned)
            .map(|(&o, &p)| {
                if p {
                    floor
                } else if free_occ > 0.0 {
                    free_mass * o / free_occ
                } else {
                    free_mass / (c - n_pinned) as f64
                }
            })
            .collect();
        let mut changed = false;
        for i in 0..c {
            if !pinned[i] && w[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return w;
        }
    }
}

/// EM for a diagonal GMM with variance and weight floors.
pub fn em_fit(frames: &Matrix, components: usize, max_iters: usize, seed: u64) -> Result<GmmFit> {
    let n = frames.rows();
    if components == 0 || n < 10 * components {
        return Err(Error::Insufficient(alloc::format!(
            "{n} frames for {components} components (need at least 10 per component)"
        )));
    }
    if !frames.is_finite() {
        return Err(Error::NonFinite("GMM training frames"));
    }
    let dim = frames.cols();
    let gvar = global_variance(frames);
    let floor: Vec<f64> = gvar.iter().map(|v| (v * VARIANCE_FLOOR_RATIO).max(1e-300)).collect();
    let means = kmeans_init(frames, components, seed)?;
    let mut variances = Matrix::zeros(components, dim);
    for c in 0..components {
        for (v, (g, f)) in variances.row_mut(c).iter_mut().zip(gvar.iter().zip(&floor)) {
            *v = g.max(*f);
        }
    }
    let mut gmm = DiagGmm::new(vec![1.0 / components as f64; components], means, variances)?;
    let mut history = Vec::new();
    let mut gamma = vec![0.0; components];

    for _ in 0..max_iters {
        let mut occ = vec![0.0; components];
        let mut first = Matrix::zeros(components, dim);
        let mut second = Matrix::zeros(components, dim);
        let mut ll = NeumaierSum::default();
        {
            let mut eval = PosteriorEvaluator::new(&gmm);
            for x in frames.row_iter() {
                ll.add(eval.eval(x, &mut gamma));
                for c in 0..components {
                    let g = gamma[c];
                    if g == 0.0 {
                        continue;
                    }
                    occ[c] += g;
                    for ((f, s), v) in first.row_mut(c).iter_mut().zip(second.row_mut(c)).zip(x) {
                        *f += g * v;
                        *s += g * v * v;
                    }
                }
            }
        }
        let mean_ll = ll.value() / n as f64;
        history.push(mean_ll);
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            if (mean_ll - prev).abs() <= 1e-6 * prev.abs().max(1e-12) {
                break;
            }
        }

        for c in 0..components {
            if occ[c] <= 0.0 {
                continue;
            }
            for k in 0..dim {
                let m = first[(c, k)] / occ[c];
                let v = second[(c, k)] / occ[c] - m * m;
                gmm.means[(c, k)] = m;
                gmm.variances[(c, k)] = v.max(floor[k]);
            }
        }
        gmm.weights = floored_weights(&occ, WEIGHT_FLOOR);
    }
    history.push(gmm.mean_log_likelihood(frames)?);
    Ok(GmmFit { gmm, log_likelihoods: history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(centres: &[f64], per: usize, dim: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        for &c in centres {
            for _ in 0..per {
                let row: Vec<f64> = (0..dim).map(|_| c + rng::normal(&mut r)).collect();
                rows.push(row);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn kmeans_with_n_equal_c_returns_rows() {
        let x = blobs(&[0.0, 10.0, 20.0], 1, 2, 1);
        let m = kmeans_init(&x, 3, 4).unwrap();
        let mut got: Vec<Vec<f64>> = m.row_iter().map(|r| r.to_vec()).collect();
        let mut want: Vec<Vec<f64>> = x.row_iter().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, want);
        assert!(kmeans_init(&x, 4, 0).is_err());
    }

    #[test]
    fn kmeans_finds_separated_clusters() {
        let x = blobs(&[-5.0, 5.0], 200, 3, 2);
        let m = kmeans_init(&x, 2, 9).unwrap();
        // brute-force centroids of the generating split
        let centroid = |lo: usize| -> Vec<f64> {
            (0..3).map(|k| (lo..lo + 200).map(|i| x[(i, k)]).sum::<f64>() / 200.0).collect()
        };
        let (a, b) = (centroid(0), centroid(200));
        for want in [a, b] {
            let best = m.row_iter().map(|r| sq_dist(r, &want).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(best < 0.05, "{best}");
        }
        assert_eq!(m, kmeans_init(&x, 2, 9).unwrap());
    }

    #[test]
    fn single_component_is_closed_form() {
        let x = blobs(&[1.5], 500, 4, 3);
        let fit = em_fit(&x, 1, 5, 0).unwrap();
        let n = 500.0;
        for k in 0..4 {
            let mean = (0..500).map(|i| x[(i, k)]).sum::<f64>() / n;
            let var = (0..500).map(|i| (x[(i, k)] - mean).powi(2)).sum::<f64>() / n;
            assert!((fit.gmm.means[(0, k)] - mean).abs() < 1e-9);
            assert!((fit.gmm.variances[(0, k)] - var).abs() < 1e-9);
        }
        assert_eq!(fit.gmm.weights, vec![1.0]);
    }

    #[test]
    fn two_gaussians_recovered_and_monotone() {
        let x = blobs(&[-5.0, 5.0], 500, 1, 4);
        let fit = em_fit(&x, 2, 100, 1).unwrap();
        let mut means: Vec<f64> = (0..2).map(|c| fit.gmm.means[(c, 0)]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 5.0).abs() < 0.2 && (means[1] - 5.0).abs() < 0.2);
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-8);
        }
        assert!((fit.gmm.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn em_errors() {
        let x = blobs(&[0.0], 15, 2, 5);
        assert!(matches!(em_fit(&x, 2, 10, 0), Err(Error::Insufficient(_))));
        let mut bad = blobs(&[0.0], 40, 2, 5);
        bad[(3, 1)] = f64::NAN;
        assert_eq!(em_fit(&bad, 2, 10, 0).unwrap_err(), Error::NonFinite("GMM training frames"));
    }

    #[test]
    fn posterior_cases() {
        let one = DiagGmm::new(vec![1.0], Matrix::zeros(1, 2), Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(posteriors(&one, &[3.0, -1.0]).unwrap(), vec![1.0]);

        let two = DiagGmm::new(
            vec![0.5, 0.5],
            Matrix::from_rows(&[[-10.0], [10.0]]).unwrap(),
            Matrix::from_rows(&[[1.0], [1.0]]).unwrap(),
        )
        .unwrap();
        let at_first = posteriors(&two, &[-10.0]).unwrap();
        assert!(at_first[0] > 0.99);
        let mid = posteriors(&two, &[0.0]).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-9 && (mid[1] - 0.5).abs() < 1e-9);
        let far = posteriors(&two, &[500.0]).unwrap();
        assert!(far.iter().all(|p| p.is_finite()));
        assert!((far.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(posteriors(&two, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn weight_floor_is_respected() {
        let w = floored_weights(&[100.0, 0.0, 1e-9, 50.0], 1e-6);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= 1e-6));
    }
}
