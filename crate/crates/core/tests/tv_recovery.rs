// Total-variability EM against a generator with a known matrix.

use wakecough_core::ivector::{extract_ivector, train_tv, BaumWelchStats, TvConfig};
use wakecough_core::linalg::{dot, norm, orthogonal_procrustes, Matrix};
use wakecough_core::rng;
use wakecough_core::ubm::DiagGmm;

struct Synthetic {
    ubm: DiagGmm,
    stats: Vec<BaumWelchStats>,
    latent: Matrix,
}

/// Stats fabricated as `f = Ñ T* w*` with `w* ~ N(0, I)`.
fn generate(components: usize, dim: usize, rank: usize, utterances: usize, seed: u64) -> Synthetic {
    let mut r = rng::seeded(seed);
    let mut var = Matrix::zeros(components, dim);
    var.as_mut_slice().iter_mut().for_each(|v| *v = 1.0);
    let ubm = DiagGmm::new(vec![1.0 / components as f64; components], Matrix::zeros(components, dim), var).unwrap();
    let mut t_true = Matrix::zeros(components * dim, rank);
    t_true.as_mut_slice().iter_mut().for_each(|x| *x = rng::normal(&mut r));
    let mut latent = Matrix::zeros(utterances, rank);
    let mut stats = Vec::new();
    for u in 0..utterances {
        let w: Vec<f64> = (0..rank).map(|_| rng::normal(&mut r)).collect();
        latent.row_mut(u).copy_from_slice(&w);
        let offset = t_true.matvec(&w).unwrap();
        let mut s = BaumWelchStats::zeros(components, dim);
        for c in 0..components {
            let n = 20.0 + 40.0 * rng::uniform(&mut r);
            s.occupancy[c] = n;
            for k in 0..dim {
                s.first_order[(c, k)] = n * offset[c * dim + k];
            }
        }
        stats.push(s);
    }
    Synthetic { ubm, stats, latent }
}

/// Mean cosine between true latents and Procrustes-aligned estimates.
pub fn aligned_cosine(estimated: &Matrix, truth: &Matrix) -> f64 {
    let q = orthogonal_procrustes(estimated, truth).unwrap();
    let aligned = estimated.matmul(&q).unwrap();
    let n = truth.rows();
    (0..n)
        .map(|i| dot(aligned.row(i), truth.row(i)) / (norm(aligned.row(i)) * norm(truth.row(i))))
        .sum::<f64>()
        / n as f64
}

#[test]
fn recovers_latent_factors_up_to_rotation() {
    let syn = generate(8, 6, 5, 50, 42);
    let fit = train_tv(&syn.ubm, &syn.stats, &TvConfig { rank: 5, iters: 10, seed: 7, min_divergence: true }).unwrap();
    let mut est = Matrix::zeros(50, 5);
    for (u, s) in syn.stats.iter().enumerate() {
        est.row_mut(u).copy_from_slice(&extract_ivector(&fit.model, s).unwrap());
    }
    let cos = aligned_cosine(&est, &syn.latent);
    println!("aligned cosine {cos:.4}, objective {:?}", fit.objective);
    assert!(cos >= 0.9);
    for w in fit.objective.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs());
    }
}
