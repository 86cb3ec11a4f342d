//! The two experiment pipelines: cougher (or speaker) identification over
//! the (N, t) grid, and cough spotting over the (F, S) grid. Outer folds
//! and classifiers are evaluated in parallel on the current rayon pool;
//! results are assembled in a fixed order so outputs do not depend on
//! the worker count.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde_json::{json, Value};
use wakecough_core::classifiers::{ClassifierKind, HyperParams, Kernel, LabeledSet};
use wakecough_core::cnn::{train_cnn, CnnConfig, CnnTask};
use wakecough_core::cougher::IvectorTask;
use wakecough_core::embeddings::{EmbeddingKind, EmbeddingSet};
use wakecough_core::eval::{
    assemble_report, fingerprint, kfold_split, run_outer_fold, ClassifierTask, CvTask, EvalReport, OUTER_FOLDS,
};
use wakecough_core::features::{extract_feature_map, FeatureMap, FrameSpec, MfccConfig};
use wakecough_core::ivector::{utterance_frames, UTTERANCE_SEC};
use wakecough_core::linalg::Matrix;
use wakecough_core::rng;

use crate::config::{ClassifierGrid, Experiment, RunConfig};
use crate::dataset::{build_cougher_task, load_entry, CougherTask, EVENT_SEC, NOISE_LABEL, SAMPLE_RATE};
use crate::error::{invalid, Error, Result};
use crate::formats::save_cnn;
use crate::manifest::{Manifest, COUGH_LABEL};
use crate::tables::{import_embeddings, write_cnn_log, write_confusion, write_rows};

/// Shares the fold-level front end between grids that use the same outer
/// folds, so the UBM and total-variability matrix are fitted once per
/// fold rather than once per classifier.
pub struct Cached<'a, T: CvTask> {
    inner: &'a T,
    slots: Mutex<HashMap<(u64, u64), Arc<Mutex<Option<Arc<T::Prepared>>>>>>,
}

impl<'a, T: CvTask> Cached<'a, T> {
    pub fn new(inner: &'a T) -> Self {
        Self { inner, slots: Mutex::new(HashMap::new()) }
    }
}

impl<T: CvTask> CvTask for Cached<'_, T> {
    type Params = T::Params;
    type Prepared = Arc<T::Prepared>;

    fn labels(&self) -> &[usize] {
        self.inner.labels()
    }

    fn classes(&self) -> usize {
        self.inner.classes()
    }

    fn prepare(&self, train: &[usize], seed: u64) -> wakecough_core::Result<Self::Prepared> {
        let slot = self.slots.lock().unwrap().entry((fingerprint(train), seed)).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some(p) = guard.as_ref() {
            return Ok(p.clone());
        }
        let p = Arc::new(self.inner.prepare(train, seed)?);
        *guard = Some(p.clone());
        Ok(p)
    }

    fn fit_predict(
        &self,
        prep: &Self::Prepared,
        params: &T::Params,
        train: &[usize],
        test: &[usize],
        seed: u64,
    ) -> wakecough_core::Result<Vec<usize>> {
        self.inner.fit_predict(prep, params, train, test, seed)
    }
}

/// Nested cross-validation of several grids on one task, sharing the
/// outer folds. Reports come back in grid order.
pub fn run_grids<T>(task: &T, grids: &[Vec<T::Params>], seed: u64) -> Result<Vec<EvalReport>>
where
    T: CvTask + Sync,
    T::Params: Sync,
{
    if grids.iter().any(|g| g.is_empty()) {
        return Err(invalid("empty hyperparameter grid"));
    }
    let plan = kfold_split(task.labels(), OUTER_FOLDS, seed)?;
    let jobs: Vec<(usize, usize)> =
        (0..OUTER_FOLDS).flat_map(|f| (0..grids.len()).map(move |g| (g, f))).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(g, f)| run_outer_fold(task, &plan, f, &grids[g], seed))
        .collect::<wakecough_core::Result<Vec<_>>>()?;
    let mut per_grid: Vec<Vec<_>> = vec![Vec::new(); grids.len()];
    for (&(g, _), o) in jobs.iter().zip(outcomes) {
        per_grid[g].push(o);
    }
    per_grid.into_iter().map(|o| Ok(assemble_report(o, task.classes())?)).collect()
}

pub fn describe_hyper(h: &HyperParams) -> Value {
    match h {
        HyperParams::LogReg(p) => json!({"kind": "lr", "reg_c": p.c, "l1": p.l1, "l2": p.l2}),
        HyperParams::Lda(p) => json!({"kind": "lda", "shrinkage": p.shrinkage}),
        HyperParams::Svm(p) => json!({
            "kind": "svm",
            "reg_c": p.c,
            "gamma": p.gamma,
            "kernel": match p.kernel { Kernel::Rbf => "rbf", Kernel::Linear => "linear" },
        }),
        HyperParams::Mlp(p) => json!({"kind": "mlp", "hidden": p.hidden, "l2": p.l2}),
    }
}

pub fn describe_cnn(c: &CnnConfig) -> Value {
    json!({
        "filters": c.filters,
        "kernel": c.kernel,
        "dropout": c.dropout,
        "dense": c.dense,
        "batch_size": c.batch_size,
        "epochs": c.epochs,
        "learning_rate": c.learning_rate,
    })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Every field of the report plus the cell description.
pub fn report_json(cell: Value, report: &EvalReport, classes: &[String], grid: &[Value], seed: u64) -> Value {
    let cm = &report.confusion;
    json!({
        "cell": cell,
        "seed": seed,
        "classes": classes,
        "fold_accuracies": report.fold_accuracies,
        "mean_accuracy": report.mean_accuracy,
        "pooled_accuracy": report.pooled_accuracy,
        "sigma_acc": report.sigma_acc,
        "sigma_convention": "population standard deviation over outer folds",
        "mean_kappa": report.mean_kappa,
        "confusion": (0..cm.classes).map(|i| cm.row(i).to_vec()).collect::<Vec<_>>(),
        "grid": grid,
        "selected": report.selected.iter().map(|&i| grid[i].clone()).collect::<Vec<_>>(),
        "inner_scores": report.inner_scores.iter()
            .map(|s| s.iter().map(|&v| finite_or_null(v)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "train_fingerprints": report.train_fingerprints.iter().map(|f| format!("{f:016x}")).collect::<Vec<_>>(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_report(out_dir: &Path, name: &str, value: &Value, report: &EvalReport, classes: &[String]) -> Result<()> {
    let dir = out_dir.join("reports");
    write_text(&dir.join(format!("{name}.json")), &(serde_json::to_string_pretty(value).expect("json") + "\n"))?;
    write_confusion(&dir.join(format!("{name}.confusion.csv")), &report.confusion, classes)
}

fn fmt_t(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{t:.0}")
    } else {
        format!("{t}")
    }
}

/// Utterance-level MFCC frames of N subjects, t seconds each.
#[derive(Debug, Clone)]
pub struct Utterances {
    pub subjects: Vec<String>,
    pub ids: Vec<String>,
    pub frames: Vec<Matrix>,
    pub labels: Vec<usize>,
}

impl Utterances {
    pub fn subject_of(&self, i: usize) -> &str {
        &self.subjects[self.labels[i]]
    }
}

/// Entries that carry a subject: coughs only for cougher identification.
pub fn subject_pool(manifest: &Manifest, experiment: Experiment) -> Manifest {
    match experiment {
        Experiment::CougherId => manifest.filter(|e| e.label == COUGH_LABEL && e.subject.is_some()),
        _ => manifest.filter(|e| e.subject.is_some() && e.label != NOISE_LABEL),
    }
}

pub fn cougher_utterances(pool: &Manifest, task: &CougherTask, mfcc: &MfccConfig) -> Result<Utterances> {
    let clips = build_cougher_task(pool, task)?;
    let per_subject = clips
        .par_iter()
        .map(|(_, clip)| Ok(utterance_frames(clip, mfcc, UTTERANCE_SEC)?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Utterances { subjects: Vec::new(), ids: Vec::new(), frames: Vec::new(), labels: Vec::new() };
    for (label, ((subject, _), frames)) in clips.iter().zip(per_subject).enumerate() {
        for (u, f) in frames.into_iter().enumerate() {
            out.ids.push(format!("{subject}-{u:05}"));
            out.frames.push(f);
            out.labels.push(label);
        }
        out.subjects.push(subject.clone());
    }
    Ok(out)
}

/// Subjects of an embedding set with enough rows for `t` seconds, each
/// cut to the expected row count in segment order.
pub fn embedding_cell(set: &EmbeddingSet, n: usize, t: f64, cfg: &RunConfig) -> Result<(LabeledSet, Vec<String>)> {
    let need = set.kind.expected_rows(t);
    let all = set.subjects();
    let eligible: Vec<String> = all.iter().filter(|s| set.rows_for(s) >= need).cloned().collect();
    let subjects = match &cfg.subject_ids {
        Some(list) => {
            if let Some(s) = list.iter().find(|s| !eligible.contains(s)) {
                return Err(invalid(format!("subject {s:?} has fewer than {need} {} rows", set.kind.name())));
            }
            if list.len() != n {
                return Err(invalid(format!("{} subjects listed for N={n}", list.len())));
            }
            let mut l = list.clone();
            l.sort();
            l
        }
        None => {
            if eligible.len() < n {
                return Err(invalid(format!(
                    "N={n} requested but only {} of {} subjects have {need} {} rows",
                    eligible.len(),
                    all.len(),
                    set.kind.name()
                )));
            }
            let mut pick = eligible;
            if cfg.random_subjects {
                rng::shuffle(&mut rng::derive(cfg.seed, 5), &mut pick);
                pick.truncate(n);
                pick.sort();
            } else {
                pick.truncate(n);
            }
            pick
        }
    };
    let mut rows = Vec::new();
    for s in &subjects {
        let mut mine: Vec<_> = set.rows.iter().filter(|r| &r.subject == s).cloned().collect();
        mine.sort_by_key(|r| r.segment);
        mine.truncate(need);
        rows.extend(mine);
    }
    let cut = EmbeddingSet::new(set.kind, rows)?;
    Ok((cut.to_labeled_set(&subjects)?, subjects))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierResult {
    pub kind: ClassifierKind,
    pub accuracy: f64,
    pub sigma_acc: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CougherRow {
    pub dataset: String,
    pub n: usize,
    pub t: f64,
    pub feature: String,
    pub results: Vec<ClassifierResult>,
}

/// One row per (N, t) with accuracy and sigma per classifier.
pub fn cougher_summary_csv(rows: &[CougherRow], kinds: &[ClassifierKind]) -> String {
    let mut s = String::from("dataset,N,t,feature");
    for k in kinds {
        let _ = write!(s, ",{0}_acc,{0}_sigma_acc", k.name());
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{}", r.dataset, r.n, fmt_t(r.t), r.feature);
        for res in &r.results {
            let _ = write!(s, ",{:.6},{:.6}", res.accuracy, res.sigma_acc);
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct CougherRun {
    pub rows: Vec<CougherRow>,
    pub summary_csv: String,
    pub out_dir: PathBuf,
}

fn results_for(
    reports: &[EvalReport],
    grids: &[ClassifierGrid],
    cell: Value,
    classes: &[String],
    cfg: &RunConfig,
    prefix: &str,
) -> Result<Vec<ClassifierResult>> {
    let mut out = Vec::new();
    for (rep, g) in reports.iter().zip(grids) {
        let mut cell = cell.clone();
        cell["classifier"] = json!(g.kind.name());
        let desc: Vec<Value> = g.points.iter().map(describe_hyper).collect();
        let name = format!("{prefix}_{}", g.kind.name());
        write_report(&cfg.out_dir, &name, &report_json(cell, rep, classes, &desc, cfg.seed), rep, classes)?;
        out.push(ClassifierResult { kind: g.kind, accuracy: rep.mean_accuracy, sigma_acc: rep.sigma_acc, kappa: rep.mean_kappa });
    }
    Ok(out)
}

/// Runs every (N, t, classifier) cell and writes reports, the resolved
/// config and `cougher_summary.csv` under `cfg.out_dir`.
pub fn run_cougher(cfg: &RunConfig) -> Result<CougherRun> {
    cfg.validate()?;
    let kind = cfg.feature_kind()?;
    let grids = cfg.classifier_grids()?;
    let kinds: Vec<ClassifierKind> = grids.iter().map(|g| g.kind).collect();
    let points: Vec<Vec<HyperParams>> = grids.iter().map(|g| g.points.clone()).collect();
    write_text(&cfg.out_dir.join("config.json"), &cfg.to_json())?;

    let embeddings = match &cfg.embeddings {
        Some(p) => Some(import_embeddings(p, kind)?),
        None => None,
    };
    let pool = match (&embeddings, &cfg.manifest) {
        (None, Some(m)) => Some(subject_pool(&Manifest::read(m)?, cfg.experiment)),
        _ => None,
    };
    let mut rows = Vec::new();
    for &n in &cfg.subject_grid()? {
        for &t in &cfg.seconds_grid()? {
            let prefix = format!("cougher_{}_N{n}_t{}_{}", cfg.dataset, fmt_t(t), kind.name());
            let cell = json!({"dataset": cfg.dataset, "N": n, "t": t, "feature": kind.name()});
            let run = || -> Result<Vec<ClassifierResult>> {
                if let Some(set) = &embeddings {
                    let (ls, subjects) = embedding_cell(set, n, t, cfg)?;
                    let task = ClassifierTask { set: &ls, standardize: cfg.standardize };
                    let reports = run_grids(&task, &points, cfg.seed)?;
                    results_for(&reports, &grids, cell.clone(), &subjects, cfg, &prefix)
                } else {
                    let task = CougherTask {
                        n,
                        t_sec: t,
                        subjects: cfg.subject_ids.clone(),
                        random: cfg.random_subjects,
                        seed: cfg.seed,
                    };
                    let utts = cougher_utterances(pool.as_ref().expect("validated"), &task, &cfg.mfcc())?;
                    let iv = IvectorTask {
                        utterances: &utts.frames,
                        labels: &utts.labels,
                        classes: utts.subjects.len(),
                        front_end: cfg.front_end()?,
                        standardize: cfg.standardize,
                    };
                    let reports = run_grids(&Cached::new(&iv), &points, cfg.seed)?;
                    results_for(&reports, &grids, cell.clone(), &utts.subjects, cfg, &prefix)
                }
            };
            let results = run().map_err(|e| e.in_cell(format!("cell N={n}, t={}", fmt_t(t))))?;
            rows.push(CougherRow { dataset: cfg.dataset.clone(), n, t, feature: kind.name().into(), results });
        }
    }
    let summary_csv = cougher_summary_csv(&rows, &kinds);
    write_text(&cfg.out_dir.join("cougher_summary.csv"), &summary_csv)?;
    Ok(CougherRun { rows, summary_csv, out_dir: cfg.out_dir.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpottingRow {
    pub frame_len: usize,
    pub frames: usize,
    pub accuracy: f64,
    pub kappa: f64,
    pub sigma_acc: f64,
}

pub fn spotting_summary_csv(rows: &[SpottingRow]) -> String {
    let mut s = String::from("F,S,accuracy,kappa,sigma_acc\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6}", r.frame_len, r.frames, r.accuracy, r.kappa, r.sigma_acc);
    }
    s
}

#[derive(Debug, Clone)]
pub struct SpottingRun {
    pub rows: Vec<SpottingRow>,
    pub reports: Vec<EvalReport>,
    pub classes: Vec<String>,
    pub best: usize,
    pub summary_csv: String,
}

/// Labelled events of a spotting manifest, one second each.
pub fn spotting_events(manifest: &Manifest) -> Result<(Vec<wakecough_core::audio::AudioClip>, Vec<usize>, Vec<String>)> {
    let events = manifest.filter(|e| e.label != NOISE_LABEL && e.split != "noise");
    let classes = events.labels();
    if classes.len() < 2 {
        return Err(invalid(format!("spotting needs at least 2 classes, manifest has {}", classes.len())));
    }
    let labels = events.entries.iter().map(|e| classes.binary_search(&e.label).expect("label from manifest")).collect();
    let clips = events
        .entries
        .par_iter()
        .map(|e| Ok(wakecough_core::audio::normalize_duration(&load_entry(&events, e)?, EVENT_SEC)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((clips, labels, classes))
}

/// Runs every (F, S) cell with the CNN grid; writes reports, the best
/// cell's confusion matrix and `spotting_summary.csv`.
pub fn run_spotting(cfg: &RunConfig) -> Result<SpottingRun> {
    cfg.validate()?;
    let specs = cfg.frame_specs()?;
    let grid = cfg.cnn_grid()?;
    let desc: Vec<Value> = grid.iter().map(describe_cnn).collect();
    write_text(&cfg.out_dir.join("config.json"), &cfg.to_json())?;
    let manifest = Manifest::read(cfg.manifest.as_ref().expect("validated"))?;
    let (clips, labels, classes) = spotting_events(&manifest)?;
    debug_assert!(clips.iter().all(|c| c.sample_rate == SAMPLE_RATE));

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut cell_maps: Vec<Vec<FeatureMap>> = Vec::new();
    for spec in &specs {
        let FrameSpec { frame_len, num_frames } = *spec;
        let cell_name = format!("cell F={frame_len}, S={num_frames}");
        let maps = clips
            .par_iter()
            .map(|c| extract_feature_map(c, *spec))
            .collect::<wakecough_core::Result<Vec<_>>>()
            .map_err(|e| Error::from(e).in_cell(cell_name.clone()))?;
        let task = CnnTask { maps: &maps, labels: &labels, classes: classes.len() };
        let report = run_grids(&task, std::slice::from_ref(&grid), cfg.seed)
            .map_err(|e| e.in_cell(cell_name.clone()))?
            .remove(0);
        let cell = json!({"dataset": cfg.dataset, "F": frame_len, "S": num_frames});
        let name = format!("spotting_{}_F{frame_len}_S{num_frames}", cfg.dataset);
        write_report(&cfg.out_dir, &name, &report_json(cell, &report, &classes, &desc, cfg.seed), &report, &classes)?;
        rows.push(SpottingRow {
            frame_len,
            frames: num_frames,
            accuracy: report.mean_accuracy,
            kappa: report.mean_kappa,
            sigma_acc: report.sigma_acc,
        });
        reports.push(report);
        if cfg.save_model {
            cell_maps.push(maps);
        }
    }
    let best = wakecough_core::eval::select_best(&rows.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    write_confusion(&cfg.out_dir.join("spotting_confusion_best.csv"), &reports[best].confusion, &classes)?;
    if cfg.save_model {
        let mut votes = vec![0usize; grid.len()];
        reports[best].selected.iter().for_each(|&s| votes[s] += 1);
        let pick = wakecough_core::eval::select_best(&votes.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let maps: Vec<&FeatureMap> = cell_maps[best].iter().collect();
        let model = train_cnn(&maps, &labels, classes.len(), &CnnConfig { seed: cfg.seed, ..grid[pick] })?;
        save_cnn(&cfg.out_dir.join("cnn_best.wcnn"), &model)?;
        write_cnn_log(&cfg.out_dir.join("cnn_best_log.csv"), &model.log)?;
        write_rows(
            &cfg.out_dir.join("cnn_best_classes.csv"),
            &["index", "label"],
            classes.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.clone()]),
        )?;
    }
    let summary_csv = spotting_summary_csv(&rows);
    write_text(&cfg.out_dir.join("spotting_summary.csv"), &summary_csv)?;
    Ok(SpottingRun { rows, reports, classes, best, summary_csv })
}

/// Kinds accepted by `--feature`.
pub fn feature_names() -> [&'static str; 3] {
    [EmbeddingKind::IVector.name(), EmbeddingKind::XVector.name(), EmbeddingKind::DVector.name()]
}
