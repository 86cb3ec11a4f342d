// Acceptance criteria 1-12. Each test prints one `criterion N: PASS|FAIL`
// line; oracles below are coded independently of the library.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use wakecough::config::{Experiment, RunConfig};
use wakecough::dataset::{
    build_sc_dataset, generate_synthetic_fixtures, FixtureSpec, ScOptions, Variant, MAX_COUGHS, NOISE_LABEL,
};
use wakecough::manifest::{scan_corpus, Layout, Manifest, COUGH_LABEL};
use wakecough::pipeline::{run_cougher, run_spotting, CougherRun, SpottingRun};
use wakecough_core::audio::{mean_power, mix_components, AudioClip};
use wakecough_core::classifiers::logreg::smooth_objective;
use wakecough_core::classifiers::mlp::MlpModel;
use wakecough_core::classifiers::svm::{solve_one_vs_rest, KernelMatrix};
use wakecough_core::classifiers::{
    train, HyperParams, LabeledSet, LdaParams, LogRegParams, MlpParams, SvmParams,
};
use wakecough_core::cnn::{CnnConfig, CnnModel, CnnShape};
use wakecough_core::eval::{cohen_kappa, confusion_matrix};
use wakecough_core::features::{plan_frames, FeatureMap};
use wakecough_core::ivector::{extract_ivector, train_tv, BaumWelchStats, TvConfig};
use wakecough_core::linalg::{dot, norm, orthogonal_procrustes, Matrix};
use wakecough_core::rng;
use wakecough_core::ubm::{em_fit, DiagGmm};

fn verdict(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_01_exact_s_framing() {
    let t = Instant::now();
    let mut bad = Vec::new();
    let mut cases = 0;
    for f in [512usize, 1024, 2048, 4096] {
        for l in [f, f + 1, 16000, 160000] {
            for s in [70usize, 100, 120, 150] {
                cases += 1;
                let off = plan_frames(l, f, s).unwrap();
                let last = l.max(f) - f;
                if off.len() != s || off[0] != 0 || off[s - 1] != last {
                    bad.push((l, f, s));
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(1, bad.is_empty() && secs < 1.0, format!("{cases} cases, failures {bad:?}, {secs:.3} s"));
}

#[test]
fn criterion_02_snr_mixer() {
    let t = Instant::now();
    let mut r = rng::seeded(2);
    let mut worst: f64 = 0.0;
    for case in 0..1000u64 {
        let len = 4000 + rng::below(&mut r, 12000);
        let f = 100.0 + 3000.0 * rng::uniform(&mut r);
        let amp = 0.05 + 0.9 * rng::uniform(&mut r);
        let sig: Vec<f64> = (0..len).map(|i| amp * (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin()).collect();
        let nlen = 2000 + rng::below(&mut r, 20000);
        let noise: Vec<f64> = (0..nlen).map(|_| 0.5 * (2.0 * rng::uniform(&mut r) - 1.0)).collect();
        let target = 34.0 + 39.0 * rng::uniform(&mut r);
        let parts = mix_components(
            &AudioClip::new(sig, 16000).unwrap(),
            &AudioClip::new(noise, 16000).unwrap(),
            target,
            case,
        )
        .unwrap();
        let snr = 10.0 * (mean_power(&parts.signal) / mean_power(&parts.noise)).log10();
        worst = worst.max((snr - target).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(2, worst <= 0.1 && secs < 30.0, format!("max |SNR error| {worst:.2e} dB over 1000 cases, {secs:.1} s"));
}

#[test]
fn criterion_03_gmm_em() {
    let t = Instant::now();
    let mut worst_drop: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    for set in 0..100u64 {
        let c = [1usize, 8, 64][set as usize % 3];
        let mut r = rng::seeded(100 + set);
        let centres: Vec<Vec<f64>> = (0..c.max(4)).map(|_| (0..20).map(|_| 4.0 * rng::normal(&mut r)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                let m = &centres[rng::below(&mut r, centres.len())];
                m.iter().map(|v| v + (0.5 + rng::uniform(&mut r)) * rng::normal(&mut r)).collect()
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let fit = em_fit(&x, c, 20, set).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        if c == 1 {
            for k in 0..20 {
                let mean = rows.iter().map(|r| r[k]).sum::<f64>() / 1000.0;
                let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / 1000.0;
                worst_closed = worst_closed.max((fit.gmm.means[(0, k)] - mean).abs());
                worst_closed = worst_closed.max((fit.gmm.variances[(0, k)] - var).abs());
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        3,
        worst_drop <= 1e-8 && worst_closed <= 1e-9 && secs < 120.0,
        format!("largest log-likelihood decrease {worst_drop:.2e}, C=1 closed-form error {worst_closed:.2e}, {secs:.1} s"),
    )
}

#[test]
fn criterion_04_total_variability_recovery() {
    let t = Instant::now();
    let (c, d, rank, n) = (8, 6, 5, 50);
    let mut r = rng::seeded(42);
    let var = Matrix::from_vec(c, d, vec![1.0; c * d]).unwrap();
    let ubm = DiagGmm::new(vec![1.0 / c as f64; c], Matrix::zeros(c, d), var).unwrap();
    let mut t_true = Matrix::zeros(c * d, rank);
    t_true.as_mut_slice().iter_mut().for_each(|x| *x = rng::normal(&mut r));
    let mut latent = Matrix::zeros(n, rank);
    let mut stats = Vec::new();
    for u in 0..n {
        let w: Vec<f64> = (0..rank).map(|_| rng::normal(&mut r)).collect();
        latent.row_mut(u).copy_from_slice(&w);
        let mut s = BaumWelchStats::zeros(c, d);
        for comp in 0..c {
            let occ = 20.0 + 40.0 * rng::uniform(&mut r);
            s.occupancy[comp] = occ;
            for k in 0..d {
                // centred first-order stats of frames drawn around T*w
                let row = comp * d + k;
                let offset: f64 = (0..rank).map(|j| t_true[(row, j)] * w[j]).sum();
                s.first_order[(comp, k)] = occ * offset;
            }
        }
        stats.push(s);
    }
    let fit = train_tv(&ubm, &stats, &TvConfig { rank, iters: 10, seed: 7, ..TvConfig::default() }).unwrap();
    let mut est = Matrix::zeros(n, rank);
    for (u, s) in stats.iter().enumerate() {
        est.row_mut(u).copy_from_slice(&extract_ivector(&fit.model, s).unwrap());
    }
    let q = orthogonal_procrustes(&est, &latent).unwrap();
    let aligned = est.matmul(&q).unwrap();
    let cos = (0..n).map(|i| dot(aligned.row(i), latent.row(i)) / (norm(aligned.row(i)) * norm(latent.row(i)))).sum::<f64>()
        / n as f64;
    let secs = t.elapsed().as_secs_f64();
    verdict(4, cos >= 0.9 && secs < 60.0, format!("mean aligned cosine {cos:.4} over {n} utterances, {secs:.2} s"));
}

/// Largest relative error between `analytic` and central differences of
/// `f` around `x`.
fn grad_check(x: &[f64], analytic: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut p = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        let num = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(num.abs()).max(1e-6);
        worst = worst.max((analytic[i] - num).abs() / denom);
    }
    worst
}

fn gaussian_set(classes: usize, per: usize, dim: usize, spread: f64, seed: u64) -> LabeledSet {
    let mut r = rng::seeded(seed);
    let centres: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| spread * rng::normal(&mut r)).collect()).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (c, m) in centres.iter().enumerate() {
        for _ in 0..per {
            rows.push(m.iter().map(|v| v + rng::normal(&mut r)).collect::<Vec<f64>>());
            y.push(c);
        }
    }
    LabeledSet::new(Matrix::from_rows(&rows).unwrap(), y, classes).unwrap()
}

#[test]
fn criterion_05_gradient_oracles() {
    let t = Instant::now();
    let set = gaussian_set(3, 10, 4, 1.0, 5);
    let params = LogRegParams { c: 2.0, l1: 0.0, l2: 0.3, ..LogRegParams::default() };
    let mut r = rng::seeded(9);
    let w0: Vec<f64> = (0..12).map(|_| 0.5 * rng::normal(&mut r)).collect();
    let b0: Vec<f64> = (0..3).map(|_| 0.1 * rng::normal(&mut r)).collect();
    let obj = |theta: &[f64]| {
        let w = Matrix::from_vec(3, 4, theta[..12].to_vec()).unwrap();
        smooth_objective(&set, &params, &w, &theta[12..])
    };
    let theta: Vec<f64> = w0.iter().chain(&b0).copied().collect();
    let (_, gw, gb) = obj(&theta);
    let analytic: Vec<f64> = gw.as_slice().iter().chain(&gb).copied().collect();
    let lr = grad_check(&theta, &analytic, 1e-6, |p| obj(p).0);

    let mlp = MlpModel::init(4, 7, 3, 11);
    let rows: Vec<usize> = (0..set.len()).collect();
    let (_, g) = mlp.loss_and_grad(&set.x, &set.y, &rows, 0.05);
    let mlp_err = grad_check(&mlp.params, &g, 1e-6, |p| {
        let m = MlpModel { params: p.to_vec(), ..mlp.clone() };
        m.loss_and_grad(&set.x, &set.y, &rows, 0.05).0
    });

    let cfg = CnnConfig { filters: 3, kernel: 2, dense: 4, dropout: 0.0, input_pool: Some((1, 1)), ..CnnConfig::default() };
    let shape = CnnShape::new(10, 10, &cfg, 3).unwrap();
    let mut cnn = CnnModel::init(cfg, shape);
    cnn.params.iter_mut().for_each(|p| *p = 0.4 * rng::normal(&mut r));
    cnn.norm_mean = vec![0.0; 10];
    cnn.norm_scale = vec![1.0; 10];
    let maps: Vec<FeatureMap> =
        (0..4).map(|_| FeatureMap::new(10, 10, (0..100).map(|_| rng::normal(&mut r) as f32).collect()).unwrap()).collect();
    let inputs: Vec<Vec<f64>> = maps.iter().map(|m| cnn.prepare_input(m).unwrap()).collect();
    let labels = [0usize, 1, 2, 1];
    let (_, g, _) = cnn.loss_and_grad(&inputs, &labels, &[0, 1, 2, 3], None);
    let cnn_err = grad_check(&cnn.params, &g, 1e-6, |p| {
        let m = CnnModel { params: p.to_vec(), ..cnn.clone() };
        m.loss_and_grad(&inputs, &labels, &[0, 1, 2, 3], None).0
    });
    let secs = t.elapsed().as_secs_f64();
    verdict(
        5,
        lr < 1e-5 && mlp_err < 1e-4 && cnn_err < 1e-3 && secs < 60.0,
        format!("max relative error LR {lr:.2e}, MLP {mlp_err:.2e}, CNN {cnn_err:.2e}, {secs:.2} s"),
    );
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Closed-form LDA: pooled ML covariance with a trace-scaled ridge.
fn lda_oracle(set: &LabeledSet, shrinkage: f64, x: &Matrix) -> Vec<usize> {
    let (n, d, k) = (set.len(), set.dim(), set.classes);
    let mut means = vec![vec![0.0; d]; k];
    let mut counts = vec![0.0; k];
    for (row, &y) in set.x.row_iter().zip(&set.y) {
        counts[y] += 1.0;
        for j in 0..d {
            means[y][j] += row[j];
        }
    }
    for c in 0..k {
        means[c].iter_mut().for_each(|v| *v /= counts[c]);
    }
    let mut cov = vec![vec![0.0; d]; d];
    for (row, &y) in set.x.row_iter().zip(&set.y) {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (row[a] - means[y][a]) * (row[b] - means[y][b]) / n as f64;
            }
        }
    }
    let ridge = shrinkage * (0..d).map(|a| cov[a][a]).sum::<f64>() / d as f64;
    (0..d).for_each(|a| cov[a][a] += ridge);
    let sols: Vec<Vec<f64>> = means.iter().map(|m| solve(cov.clone(), m.clone())).collect();
    x.row_iter()
        .map(|row| {
            let scores: Vec<f64> = (0..k)
                .map(|c| {
                    let lin: f64 = row.iter().zip(&sols[c]).map(|(a, b)| a * b).sum();
                    let quad: f64 = means[c].iter().zip(&sols[c]).map(|(a, b)| a * b).sum();
                    lin - 0.5 * quad + (counts[c] / n as f64).ln()
                })
                .collect();
            (0..k).max_by(|&i, &j| scores[i].total_cmp(&scores[j])).unwrap()
        })
        .collect()
}

#[test]
fn criterion_06_classifier_oracles() {
    let t = Instant::now();
    let set = gaussian_set(3, 20, 4, 1.5, 6);
    let mut r = rng::seeded(61);
    let probe = Matrix::from_rows(&(0..200).map(|_| (0..4).map(|_| 2.5 * rng::normal(&mut r)).collect::<Vec<f64>>()).collect::<Vec<_>>())
        .unwrap();
    let lda = train(&set, &HyperParams::Lda(LdaParams::default()), 0, false).unwrap();
    let mut lda_diff = 0;
    for x in [&set.x, &probe] {
        let got = lda.predict(x).unwrap().labels;
        lda_diff += got.iter().zip(lda_oracle(&set, LdaParams::default().shrinkage, x)).filter(|(a, b)| **a != *b).count();
    }

    let svm = SvmParams::rbf(1.0, 0.2);
    let (k, sols) = solve_one_vs_rest(&set, &svm).unwrap();
    let (mut box_err, mut eq_err, mut kkt): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (c, sol) in sols.iter().enumerate() {
        let y: Vec<f64> = set.y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        eq_err = eq_err.max(sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs());
        for (i, &a) in sol.alpha.iter().enumerate() {
            box_err = box_err.max((-a).max(a - svm.c).max(0.0));
            let f: f64 = (0..y.len()).map(|j| sol.alpha[j] * y[j] * k.get(i, j)).sum::<f64>() - sol.rho;
            let m = y[i] * f - 1.0;
            let v = if a <= 1e-8 {
                (-m).max(0.0)
            } else if a >= svm.c - 1e-8 {
                m.max(0.0)
            } else {
                m.abs()
            };
            kkt = kkt.max(v);
        }
    }
    let _: &KernelMatrix = &k;

    let sep = gaussian_set(3, 20, 3, 12.0, 7);
    let hypers = [
        HyperParams::LogReg(LogRegParams { c: 100.0, ..LogRegParams::default() }),
        HyperParams::Lda(LdaParams::default()),
        HyperParams::Svm(SvmParams::rbf(10.0, 0.1)),
        HyperParams::Mlp(MlpParams::default()),
    ];
    let mut train_acc = Vec::new();
    for h in &hypers {
        let m = train(&sep, h, 3, true).unwrap();
        let p = m.predict(&sep.x).unwrap().labels;
        train_acc.push(p.iter().zip(&sep.y).filter(|(a, b)| a == b).count() as f64 / sep.len() as f64);
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        6,
        lda_diff == 0 && box_err <= 1e-6 && eq_err <= 1e-6 && kkt <= 1e-3 && train_acc.iter().all(|&a| a == 1.0) && secs < 60.0,
        format!(
            "LDA mismatches {lda_diff}/260, SVM box {box_err:.1e} equality {eq_err:.1e} KKT {kkt:.1e}, training accuracy lr/lda/svm/mlp {train_acc:?}, {secs:.2} s"
        ),
    );
}

#[test]
fn criterion_07_metric_exactness() {
    let t = Instant::now();
    let half = cohen_kappa(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
    let one = cohen_kappa(&[2, 0, 1, 1, 2], &[2, 0, 1, 1, 2]).unwrap();
    let mut r = rng::seeded(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 1 + rng::below(&mut r, 200);
        let k = 2 + rng::below(&mut r, 6);
        let truth: Vec<usize> = (0..n).map(|_| rng::below(&mut r, k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng::below(&mut r, k)).collect();
        let cm = confusion_matrix(&pred, &truth, k).unwrap();
        let acc = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / n as f64;
        worst = worst.max((cm.trace() as f64 / cm.total() as f64 - acc).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        7,
        (half - 0.5).abs() < 1e-12 && (one - 1.0).abs() < 1e-12 && worst == 0.0 && secs < 5.0,
        format!("kappa {half} and {one}, max |trace/sum - accuracy| {worst:e}, {secs:.3} s"),
    );
}

struct EndToEnd {
    cougher: CougherRun,
    cougher_secs: f64,
    spotting: SpottingRun,
    spotting_secs: f64,
}

fn cougher_config(fixture: &Manifest, out: &Path) -> RunConfig {
    RunConfig {
        experiment: Experiment::CougherId,
        manifest: Some(fixture.base.join("manifest.jsonl")),
        out_dir: out.to_path_buf(),
        subjects: "5".into(),
        seconds: "20".into(),
        classifiers: vec!["mlp".into()],
        components: 64,
        rank: 100,
        seed: 11,
        ..RunConfig::default()
    }
}

fn spotting_config(manifest: &Path, out: &Path) -> RunConfig {
    RunConfig {
        experiment: Experiment::Spotting,
        manifest: Some(manifest.to_path_buf()),
        out_dir: out.to_path_buf(),
        frame_len: "1024".into(),
        frames: "100".into(),
        seed: 13,
        ..RunConfig::default()
    }
}

/// Fixture generation, corpus build and both pipelines under `dir`.
fn end_to_end(dir: &Path) -> EndToEnd {
    let fixture = generate_synthetic_fixtures(&FixtureSpec::default(), &dir.join("fixture")).unwrap();
    let t = Instant::now();
    let cougher = run_cougher(&cougher_config(&fixture, &dir.join("cougher"))).unwrap();
    let cougher_secs = t.elapsed().as_secs_f64();

    let sc_dir = dir.join("sc");
    let opts = ScOptions { variant: Variant::All, seed: 17, ..ScOptions::default() };
    let sc = build_sc_dataset(
        &fixture.with_split("command"),
        &fixture.with_split("cough"),
        &fixture.with_split("noise"),
        &opts,
        &sc_dir,
    )
    .unwrap();
    sc.write(&sc_dir.join("manifest.jsonl")).unwrap();
    let t = Instant::now();
    let spotting = run_spotting(&spotting_config(&sc_dir.join("manifest.jsonl"), &dir.join("spotting"))).unwrap();
    EndToEnd { cougher, cougher_secs, spotting, spotting_secs: t.elapsed().as_secs_f64() }
}

fn first_run() -> &'static EndToEnd {
    static RUN: OnceLock<EndToEnd> = OnceLock::new();
    RUN.get_or_init(|| end_to_end(&scratch("run1")))
}

#[test]
fn criterion_08_synthetic_cougher_identification() {
    let run = first_run();
    let row = &run.cougher.rows[0];
    let res = &row.results[0];
    let folds = std::fs::read_to_string(run.cougher.out_dir.join("reports/cougher_synthetic_N5_t20_ivector_mlp.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&folds).unwrap();
    let n_folds = report["fold_accuracies"].as_array().unwrap().len();
    verdict(
        8,
        res.accuracy >= 0.90 && n_folds == 5 && run.cougher_secs < 300.0,
        format!(
            "N=5, t=20 s, i-vector C=64 R=100 + MLP: mean outer-fold accuracy {:.4}, sigma {:.4}, {n_folds} folds, {:.0} s",
            res.accuracy, res.sigma_acc, run.cougher_secs
        ),
    );
}

#[test]
fn criterion_09_synthetic_spotting() {
    let run = first_run();
    let s = &run.spotting;
    let row = &s.rows[0];
    let classes = s.classes.len();
    let events: u64 = s.reports[0].confusion.total();
    let grid = RunConfig { experiment: Experiment::Spotting, ..RunConfig::default() }.cnn_grid().unwrap().len();
    verdict(
        9,
        row.accuracy >= 0.95 && row.kappa >= 0.90 && classes == 5 && events == 1000 && grid == 4 && run.spotting_secs < 600.0,
        format!(
            "{classes} classes, {events} events, F=1024 S=100, {grid} CNN configs: accuracy {:.4}, kappa {:.4}, {:.0} s",
            row.accuracy, row.kappa, run.spotting_secs
        ),
    );
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_wakecough")).args(args).output().unwrap().status.code().unwrap_or(-1)
}

#[test]
fn criterion_10_grid_conformance() {
    let accept: &[&[&str]] = &[
        &["run-spotting", "--manifest", "m.jsonl", "--frame-len", "2^k, k=9, … 12", "--frames", "10 × k, k=7, 10, 12, 15"],
        &["run-spotting", "--manifest", "m.jsonl", "--set", "cnn_filters=3 × 2^k where k=3, 4, 5"],
        &["run-spotting", "--manifest", "m.jsonl", "--set", "cnn_epochs=10 to 200 in steps of 20"],
        &["run-cougher", "--manifest", "m.jsonl", "--subjects", "5 to 51 with step of 5"],
        &["run-cougher", "--manifest", "m.jsonl", "--seconds", "2, 5 to 100 with step of 5"],
        &["run-cougher", "--manifest", "m.jsonl", "--classifiers", "svm", "--set", "svm_c=10^i where i=−7, … 7"],
        &["run-cougher", "--manifest", "m.jsonl", "--classifiers", "lr,svm", "--set", "lr_c=10^i where i=−7, … 7", "--set", "svm_gamma=10^i where i=−7, … 7"],
        &["run-cougher", "--manifest", "m.jsonl", "--set", "mlp_hidden=70 to 150 in steps of 20"],
        &["run-cougher", "--manifest", "m.jsonl", "--classifiers", "lr,lda,svm,mlp"],
    ];
    let reject: &[&[&str]] = &[
        &["run-spotting", "--manifest", "m.jsonl", "--frame-len", "1000"],
        &["run-spotting", "--manifest", "m.jsonl", "--frames", "80"],
        &["run-cougher", "--manifest", "m.jsonl", "--subjects", "7"],
        &["run-cougher", "--manifest", "m.jsonl", "--seconds", "3"],
        &["run-cougher", "--manifest", "m.jsonl", "--classifiers", "knn"],
        &["run-cougher", "--manifest", "m.jsonl", "--set", "mlp_hidden=80"],
        &["run-cougher", "--manifest", "m.jsonl", "--classifiers", "svm", "--set", "svm_c=10^8"],
        &["run-spotting", "--manifest", "m.jsonl", "--set", "cnn_epochs=200"],
    ];
    let mut wrong = Vec::new();
    for a in accept {
        let mut args = a.to_vec();
        args.push("--dry-run");
        if cli(&args) != 0 {
            wrong.push(format!("rejected {a:?}"));
        }
    }
    for a in reject {
        let mut args = a.to_vec();
        args.push("--dry-run");
        if cli(&args) != 2 {
            wrong.push(format!("accepted {a:?}"));
        }
        if !a.contains(&"knn") {
            args.push("--allow-offgrid");
            if cli(&args) != 0 {
                wrong.push(format!("override refused for {a:?}"));
            }
        }
    }
    verdict(
        10,
        wrong.is_empty(),
        format!("{} verbatim grids accepted, {} off-grid values rejected with exit 2, {wrong:?}", accept.len(), reject.len()),
    );
}

#[test]
fn criterion_11_determinism() {
    let first = first_run();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let second = pool.install(|| end_to_end(&scratch("run2")));
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    let c1 = read(first.cougher.out_dir.join("cougher_summary.csv"));
    let c2 = read(second.cougher.out_dir.join("cougher_summary.csv"));
    let s1 = read(scratch_path("run1").join("spotting/spotting_summary.csv"));
    let s2 = read(scratch_path("run2").join("spotting/spotting_summary.csv"));
    verdict(
        11,
        c1 == c2 && s1 == s2 && !c1.is_empty() && !s1.is_empty(),
        format!("cougher summary identical: {}, spotting summary identical: {}", c1 == c2, s1 == s2),
    );
}

fn scratch_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name)
}

#[test]
fn criterion_12_real_corpus() {
    let (Ok(commands), Ok(coughs)) = (std::env::var("WAKECOUGH_SC_DIR"), std::env::var("WAKECOUGH_COUGH_DIR")) else {
        println!("criterion 12: SKIP (set WAKECOUGH_SC_DIR and WAKECOUGH_COUGH_DIR to run)");
        return;
    };
    let commands = scan_corpus(Path::new(&commands), Layout::ClassPerDir).unwrap();
    let coughs = scan_corpus(Path::new(&coughs), Layout::SubjectPerDir).unwrap();
    let noises = commands.with_label(NOISE_LABEL);
    let mut detail = Vec::new();
    let mut ok = true;
    for (variant, want) in [(Variant::Sc36, 36usize), (Variant::Sc11, 11)] {
        let dir = scratch(&format!("real-{want}"));
        let opts = ScOptions { variant, seed: 1, ..ScOptions::default() };
        let m = build_sc_dataset(&commands, &coughs, &noises, &opts, &dir).unwrap();
        let classes = m.labels().len();
        let n_coughs = m.with_label(COUGH_LABEL).entries.len();
        ok &= classes == want && n_coughs <= MAX_COUGHS;
        detail.push(format!("{variant:?}: {classes} classes, {n_coughs} coughs"));
        let _ = std::fs::remove_dir_all(&dir);
    }
    verdict(12, ok, detail.join("; "));
}
