//! Total-variability modelling: Baum-Welch statistics against a UBM,
//! EM training of the total-variability matrix `T`, and i-vector
//! extraction as the posterior mean of the latent factor.
//!
//! An utterance's centred first-order supervector is modelled as
//! `f ≈ Ñ T w` with `w ~ N(0, I)`, where `Ñ` repeats each component's
//! occupancy over its `D` feature dimensions and the residual covariance
//! is the UBM's diagonal `Σ`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::audio::AudioClip;
use crate::error::{check_dim, invalid, Error, Result};
use crate::features::{mfcc, MfccConfig};
use crate::linalg::{axpy, dot, Cholesky, Matrix};
use crate::rng;
use crate::ubm::{DiagGmm, NeumaierSum, PosteriorEvaluator};

pub const IVECTOR_DIM: usize = 100;
pub const UTTERANCE_SEC: f64 = 0.1;
pub const INIT_SCALE: f64 = 0.001;
pub const CHOLESKY_JITTER: f64 = 1e-10;

/// Zeroth- and centred first-order statistics of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchStats {
    /// Occupancy per component, length `C`.
    pub occupancy: Vec<f64>,
    /// `C × D`, centred on the UBM means.
    pub first_order: Matrix,
}

impl BaumWelchStats {
    pub fn zeros(components: usize, dim: usize) -> Self {
        Self { occupancy: vec![0.0; components], first_order: Matrix::zeros(components, dim) }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.occupancy.iter_mut().for_each(|n| *n *= alpha);
        out.first_order.as_mut_slice().iter_mut().for_each(|f| *f *= alpha);
        out
    }
}

/// Total-variability matrix with the UBM covariance it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct TvModel {
    /// `(C·D) × R`, component-major rows.
    pub t: Matrix,
    pub components: usize,
    pub dim: usize,
    /// `1/σ²` per supervector row.
    inv_var: Vec<f64>,
}

impl TvModel {
    pub fn new(t: Matrix, ubm: &DiagGmm) -> Result<Self> {
        let (c, d) = (ubm.num_components(), ubm.dim());
        check_dim(c * d, t.rows())?;
        if t.cols() == 0 {
            return Err(invalid("i-vector rank must be at least 1"));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("total-variability matrix"));
        }
        let inv_var = ubm.variances.as_slice().iter().map(|v| 1.0 / v).collect();
        Ok(Self { t, components: c, dim: d, inv_var })
    }

    pub fn rank(&self) -> usize {
        self.t.cols()
    }

    fn check_stats(&self, stats: &BaumWelchStats) -> Result<()> {
        check_dim(self.components, stats.occupancy.len())?;
        check_dim(self.components, stats.first_order.rows())?;
        check_dim(self.dim, stats.first_order.cols())
    }

    /// Precomputes `T_cᵀ Σ_c⁻¹ T_c` for every component.
    pub fn extractor(&self) -> IvectorExtractor<'_> {
        let r = self.rank();
        let d = self.dim;
        let mut blocks = Vec::with_capacity(self.components);
        for c in 0..self.components {
            let mut m = Matrix::zeros(r, r);
            for k in 0..d {
                let row = c * d + k;
                let tr = self.t.row(row);
                let iv = self.inv_var[row];
                for i in 0..r {
                    let a = iv * tr[i];
                    if a == 0.0 {
                        continue;
                    }
                    axpy(a, &tr[i..], &mut m.row_mut(i)[i..]);
                }
            }
            for i in 0..r {
                for j in 0..i {
                    m[(i, j)] = m[(j, i)];
                }
            }
            blocks.push(m);
        }
        IvectorExtractor { model: self, blocks }
    }
}

/// Posterior of the latent factor for one utterance.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    pub mean: Vec<f64>,
    /// `L = I + Tᵀ Σ⁻¹ Ñ T`, factored.
    pub precision: Cholesky,
    /// `Tᵀ Σ⁻¹ f`
    pub projected: Vec<f64>,
}

impl LatentPosterior {
    pub fn covariance(&self) -> Matrix {
        self.precision.inverse()
    }

    /// T-dependent part of the marginal log-likelihood of the statistics.
    pub fn log_evidence(&self) -> f64 {
        0.5 * dot(&self.projected, &self.mean) - 0.5 * self.precision.log_det()
    }
}

pub struct IvectorExtractor<'a> {
    model: &'a TvModel,
    blocks: Vec<Matrix>,
}

impl IvectorExtractor<'_> {
    pub fn posterior(&self, stats: &BaumWelchStats) -> Result<LatentPosterior> {
        let tv = self.model;
        tv.check_stats(stats)?;
        let r = tv.rank();
        let mut precision = Matrix::identity(r);
        for (c, &n) in stats.occupancy.iter().enumerate() {
            if n != 0.0 {
                axpy(n, self.blocks[c].as_slice(), precision.as_mut_slice());
            }
        }
        let mut projected = vec![0.0; r];
        for (row, (&f, &iv)) in stats.first_order.as_slice().iter().zip(&tv.inv_var).enumerate() {
            let s = f * iv;
            if s != 0.0 {
                axpy(s, tv.t.row(row), &mut projected);
            }
        }
        let chol = Cholesky::factor_with_jitter(&precision, CHOLESKY_JITTER)?;
        let mean = chol.solve(&projected);
        Ok(LatentPosterior { mean, precision: chol, projected })
    }

    pub fn extract(&self, stats: &BaumWelchStats) -> Result<Vec<f64>> {
        Ok(self.posterior(stats)?.mean)
    }
}

/// `w = (I + TᵀΣ⁻¹ÑT)⁻¹ TᵀΣ⁻¹f`
pub fn extract_ivector(tv: &TvModel, stats: &BaumWelchStats) -> Result<Vec<f64>> {
    tv.extractor().extract(stats)
}

/// An i-vector tagged with its utterance and subject.
#[derive(Debug, Clone, PartialEq)]
pub struct IVector {
    pub w: Vec<f64>,
    pub utterance_id: String,
    pub cougher_id: String,
}

/// All embeddings of one subject's audio, one row per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub subject: String,
    pub rows: Matrix,
}

/// Non-overlapping segments of `seg_sec` from the head; a shorter
/// remainder is dropped.
pub fn segment_utterances(clip: &AudioClip, seg_sec: f64) -> Result<Vec<AudioClip>> {
    if !(seg_sec > 0.0) {
        return Err(invalid("segment length must be positive"));
    }
    let seg = (seg_sec * clip.sample_rate as f64).round() as usize;
    if seg == 0 || clip.len() < seg {
        return Err(Error::TooShort { needed: seg, have: clip.len() });
    }
    Ok(clip
        .samples
        .chunks_exact(seg)
        .map(|s| AudioClip { samples: s.to_vec(), sample_rate: clip.sample_rate })
        .collect())
}

/// MFCC frames of the whole clip grouped into non-overlapping utterances
/// of `seg_sec` by frame start time.
///
/// Cepstral mean subtraction (when enabled in `config`) therefore runs
/// over the full clip rather than over each short utterance.
pub fn utterance_frames(clip: &AudioClip, config: &MfccConfig, seg_sec: f64) -> Result<Vec<Matrix>> {
    let seg = (seg_sec * clip.sample_rate as f64).round() as usize;
    if seg == 0 || clip.len() < seg {
        return Err(Error::TooShort { needed: seg, have: clip.len() });
    }
    let n_utts = clip.len() / seg;
    let feats = mfcc(clip, config)?;
    let hop = config.hop_len(clip.sample_rate).max(1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_utts];
    for t in 0..feats.rows() {
        let u = t * hop / seg;
        if u < n_utts {
            groups[u].push(t);
        }
    }
    Ok(groups.iter().map(|idx| feats.select_rows(idx)).collect())
}

/// `N_c = Σ_t γ_c(x_t)`, `F_c = Σ_t γ_c(x_t)(x_t − μ_c)`.
pub fn accumulate_stats(gmm: &DiagGmm, frames: &Matrix) -> Result<BaumWelchStats> {
    let (c, d) = (gmm.num_components(), gmm.dim());
    if frames.rows() > 0 {
        check_dim(d, frames.cols())?;
    }
    let mut stats = BaumWelchStats::zeros(c, d);
    let mut eval = PosteriorEvaluator::new(gmm);
    let mut gamma = vec![0.0; c];
    let mut raw = Matrix::zeros(c, d);
    for x in frames.row_iter() {
        eval.eval(x, &mut gamma);
        for (k, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            stats.occupancy[k] += g;
            axpy(g, x, raw.row_mut(k));
        }
    }
    for k in 0..c {
        let n = stats.occupancy[k];
        let mean = gmm.means.row(k);
        for ((f, r), m) in stats.first_order.row_mut(k).iter_mut().zip(raw.row(k)).zip(mean) {
            *f = r - n * m;
        }
    }
    Ok(stats)
}

/// Output of [`train_tv`]: the model and the data log-likelihood
/// (up to a T-independent constant) before each iteration and at the end.
#[derive(Debug, Clone)]
pub struct TvFit {
    pub model: TvModel,
    pub objective: Vec<f64>,
}

/// Seeded Gaussian initialisation, `N(0, (0.001·σ)²)` per supervector row.
pub fn init_tv(ubm: &DiagGmm, rank: usize, seed: u64) -> Result<TvModel> {
    let rows = ubm.num_components() * ubm.dim();
    let mut r = rng::seeded(seed);
    let mut t = Matrix::zeros(rows, rank);
    for (i, &v) in ubm.variances.as_slice().iter().enumerate() {
        let s = INIT_SCALE * v.sqrt();
        for x in t.row_mut(i) {
            *x = s * rng::normal(&mut r);
        }
    }
    TvModel::new(t, ubm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvConfig {
    pub rank: usize,
    pub iters: usize,
    pub seed: u64,
    /// Re-normalise the latent second moment to identity after each
    /// M-step (`T ← T·chol(S)`); a parameter-expanded EM step.
    pub min_divergence: bool,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self { rank: IVECTOR_DIM, iters: 10, seed: 0, min_divergence: true }
    }
}

/// EM training of the total-variability matrix.
///
/// Components that received no occupancy across all utterances keep
/// their initial rows.
pub fn train_tv(ubm: &DiagGmm, stats_list: &[BaumWelchStats], config: &TvConfig) -> Result<TvFit> {
    let TvConfig { rank, iters, seed, min_divergence } = *config;
    if stats_list.len() < 2 {
        return Err(Error::Insufficient(alloc::format!(
            "{} utterances; total-variability training needs at least 2",
            stats_list.len()
        )));
    }
    let mut model = init_tv(ubm, rank, seed)?;
    for s in stats_list {
        model.check_stats(s)?;
    }
    let (c_count, d) = (model.components, model.dim);
    let mut objective = Vec::with_capacity(iters + 1);

    for _ in 0..iters {
        let mut acc_a: Vec<Matrix> = (0..c_count).map(|_| Matrix::zeros(rank, rank)).collect();
        let mut acc_c = Matrix::zeros(c_count * d, rank);
        let mut total_occ = vec![0.0; c_count];
        let mut moment = Matrix::zeros(rank, rank);
        let mut ll = NeumaierSum::default();
        {
            let ex = model.extractor();
            let mut second = Matrix::zeros(rank, rank);
            for s in stats_list {
                let post = ex.posterior(s)?;
                ll.add(post.log_evidence());
                second.clone_from(&post.covariance());
                for i in 0..rank {
                    let mi = post.mean[i];
                    axpy(mi, &post.mean, second.row_mut(i));
                }
                axpy(1.0, second.as_slice(), moment.as_mut_slice());
                for (c, &n) in s.occupancy.iter().enumerate() {
                    if n == 0.0 {
                        continue;
                    }
                    total_occ[c] += n;
                    axpy(n, second.as_slice(), acc_a[c].as_mut_slice());
                }
                for (row, &f) in s.first_order.as_slice().iter().enumerate() {
                    if f != 0.0 {
                        axpy(f, &post.mean, acc_c.row_mut(row));
                    }
                }
            }
        }
        objective.push(ll.value());

        for c in 0..c_count {
            if total_occ[c] <= 0.0 {
                continue;
            }
            let chol = Cholesky::factor_with_jitter(&acc_a[c], CHOLESKY_JITTER)?;
            for k in 0..d {
                let row = c * d + k;
                let solved = chol.solve(acc_c.row(row));
                model.t.row_mut(row).copy_from_slice(&solved);
            }
        }
        if min_divergence {
            moment.as_mut_slice().iter_mut().for_each(|m| *m /= stats_list.len() as f64);
            let g = Cholesky::factor_with_jitter(&moment, CHOLESKY_JITTER)?;
            model.t = model.t.matmul(g.lower())?;
        }
        if !model.t.is_finite() {
            return Err(Error::NonFinite("total-variability matrix"));
        }
    }
    objective.push(tv_objective(&model, stats_list)?);
    Ok(TvFit { model, objective })
}

/// `Σ_u ½ bᵤᵀ Lᵤ⁻¹ bᵤ − ½ ln|Lᵤ|`: the T-dependent part of the marginal
/// log-likelihood of the statistics.
pub fn tv_objective(model: &TvModel, stats_list: &[BaumWelchStats]) -> Result<f64> {
    let ex = model.extractor();
    let mut ll = NeumaierSum::default();
    for s in stats_list {
        ll.add(ex.posterior(s)?.log_evidence());
    }
    Ok(ll.value())
}
