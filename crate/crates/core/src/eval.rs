//! Stratified k-fold splitting, nested grid search and the reported
//! metrics (accuracy, population σ over folds, Cohen's kappa, confusion).

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::classifiers::{self, HyperParams, LabeledSet};
use crate::error::{check_dim, invalid, Error, Result};
use crate::rng;

pub const OUTER_FOLDS: usize = 5;
pub const INNER_FOLDS: usize = 4;

/// Fold index for every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Shuffles each class with the seed and deals it round-robin; each class
/// starts where the previous one stopped so fold sizes stay balanced.
pub fn kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid("need at least two folds"));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut assignment = vec![0usize; labels.len()];
    let mut offset = 0usize;
    for (c, idx) in members.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(Error::Insufficient(alloc::format!(
                "class {c} has {} samples, fewer than {k} folds",
                idx.len()
            )));
        }
        let mut r = rng::derive(seed, c as u64);
        rng::shuffle(&mut r, idx);
        for (j, &i) in idx.iter().enumerate() {
            assignment[i] = (offset + j) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(FoldPlan { k, assignment, seed })
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_dim(truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(invalid("accuracy of an empty label set"));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Square count matrix, rows are true classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        check_dim(self.classes, other.classes)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 { 0.0 } else { self.trace() as f64 / total as f64 }
    }
}

pub fn confusion_matrix(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    check_dim(truth.len(), pred.len())?;
    let mut m = ConfusionMatrix::zeros(classes);
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(invalid(alloc::format!("label outside 0..{classes}")));
        }
        m.counts[t * classes + p] += 1;
    }
    Ok(m)
}

pub fn cohen_kappa(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_dim(truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(invalid("kappa of an empty label set"));
    }
    let classes = pred.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    let m = confusion_matrix(pred, truth, classes)?;
    Ok(kappa_from_confusion(&m))
}

pub fn kappa_from_confusion(m: &ConfusionMatrix) -> f64 {
    let n = m.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let po = m.trace() as f64 / n;
    let mut pe = 0.0;
    for c in 0..m.classes {
        let row: u64 = m.row(c).iter().sum();
        let col: u64 = (0..m.classes).map(|t| m.get(t, c)).sum();
        pe += (row as f64 / n) * (col as f64 / n);
    }
    if 1.0 - pe <= f64::EPSILON {
        return if po >= 1.0 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

/// Population standard deviation of per-fold accuracies.
pub fn sigma_acc(folds: &[f64]) -> Result<f64> {
    if folds.len() < 2 {
        return Err(invalid("σ needs at least two folds"));
    }
    let n = folds.len() as f64;
    let mean = folds.iter().sum::<f64>() / n;
    let var = folds.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// FNV-1a over a sorted index list; recorded per fold so reports show
/// which rows each front end was trained on.
pub fn fingerprint(indices: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// A learning problem that nested cross-validation can drive. `prepare`
/// builds whatever front end must be fitted on the outer training rows
/// only; inner folds reuse it.
pub trait CvTask {
    type Params;
    type Prepared;

    fn labels(&self) -> &[usize];
    fn classes(&self) -> usize;
    fn prepare(&self, train: &[usize], seed: u64) -> Result<Self::Prepared>;
    fn fit_predict(
        &self,
        prep: &Self::Prepared,
        params: &Self::Params,
        train: &[usize],
        test: &[usize],
        seed: u64,
    ) -> Result<Vec<usize>>;
}

/// Plain classifier on a fixed feature matrix.
pub struct ClassifierTask<'a> {
    pub set: &'a LabeledSet,
    pub standardize: bool,
}

impl CvTask for ClassifierTask<'_> {
    type Params = HyperParams;
    type Prepared = ();

    fn labels(&self) -> &[usize] {
        &self.set.y
    }

    fn classes(&self) -> usize {
        self.set.classes
    }

    fn prepare(&self, _train: &[usize], _seed: u64) -> Result<()> {
        Ok(())
    }

    fn fit_predict(&self, _: &(), params: &HyperParams, train: &[usize], test: &[usize], seed: u64) -> Result<Vec<usize>> {
        let model = classifiers::train(&self.set.subset(train), params, seed, self.standardize)?;
        Ok(model.predict(&self.set.x.select_rows(test))?.labels)
    }
}

/// Outcome of one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub selected: usize,
    /// Mean inner accuracy per grid point.
    pub inner_scores: Vec<f64>,
    pub accuracy: f64,
    pub kappa: f64,
    pub confusion: ConfusionMatrix,
    pub test_indices: Vec<usize>,
    pub predictions: Vec<usize>,
    pub train_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub pooled_accuracy: f64,
    pub sigma_acc: f64,
    pub mean_kappa: f64,
    pub confusion: ConfusionMatrix,
    /// Grid index chosen in each outer fold.
    pub selected: Vec<usize>,
    pub inner_scores: Vec<Vec<f64>>,
    pub train_fingerprints: Vec<u64>,
}

/// Index of the best score; earlier entries win ties.
pub fn select_best(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Runs outer fold `fold` of `plan`: inner CV over `grid` on the outer
/// training rows, refit of the winner, scoring on the held-out rows.
pub fn run_outer_fold<T: CvTask>(
    task: &T,
    plan: &FoldPlan,
    fold: usize,
    grid: &[T::Params],
    seed: u64,
) -> Result<FoldOutcome> {
    if grid.is_empty() {
        return Err(invalid("empty hyperparameter grid"));
    }
    let labels = task.labels();
    let train = plan.train_indices(fold);
    let test = plan.test_indices(fold);
    let wrap = |e: Error| e.in_fold(fold);
    let prep = task.prepare(&train, rng::mix(seed, &[fold as u64, 0])).map_err(wrap)?;

    let inner_scores = if grid.len() == 1 {
        vec![f64::NAN]
    } else {
        let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let inner = kfold_split(&train_labels, INNER_FOLDS, rng::mix(seed, &[fold as u64, 1])).map_err(wrap)?;
        let mut scores = vec![0.0; grid.len()];
        for (g, params) in grid.iter().enumerate() {
            let mut sum = 0.0;
            for f in 0..INNER_FOLDS {
                let itrain: Vec<usize> = inner.train_indices(f).iter().map(|&i| train[i]).collect();
                let itest: Vec<usize> = inner.test_indices(f).iter().map(|&i| train[i]).collect();
                let s = rng::mix(seed, &[fold as u64, 2, f as u64, g as u64]);
                let pred = task.fit_predict(&prep, params, &itrain, &itest, s).map_err(wrap)?;
                let truth: Vec<usize> = itest.iter().map(|&i| labels[i]).collect();
                sum += accuracy(&pred, &truth)?;
            }
            scores[g] = sum / INNER_FOLDS as f64;
        }
        scores
    };
    let selected = if grid.len() == 1 { 0 } else { select_best(&inner_scores) };
    let s = rng::mix(seed, &[fold as u64, 3]);
    let predictions = task.fit_predict(&prep, &grid[selected], &train, &test, s).map_err(wrap)?;
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let confusion = confusion_matrix(&predictions, &truth, task.classes()).map_err(wrap)?;
    Ok(FoldOutcome {
        fold,
        selected,
        inner_scores,
        accuracy: accuracy(&predictions, &truth)?,
        kappa: kappa_from_confusion(&confusion),
        confusion,
        test_indices: test,
        predictions,
        train_fingerprint: fingerprint(&train),
    })
}

/// Merges outer-fold outcomes (in any order) into a report.
pub fn assemble_report(mut outcomes: Vec<FoldOutcome>, classes: usize) -> Result<EvalReport> {
    if outcomes.is_empty() {
        return Err(invalid("no folds to report"));
    }
    outcomes.sort_by_key(|o| o.fold);
    let fold_accuracies: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let k = fold_accuracies.len() as f64;
    let mut confusion = ConfusionMatrix::zeros(classes);
    for o in &outcomes {
        confusion.add(&o.confusion)?;
    }
    Ok(EvalReport {
        mean_accuracy: fold_accuracies.iter().sum::<f64>() / k,
        pooled_accuracy: confusion.accuracy(),
        sigma_acc: if outcomes.len() >= 2 { sigma_acc(&fold_accuracies)? } else { 0.0 },
        mean_kappa: outcomes.iter().map(|o| o.kappa).sum::<f64>() / k,
        confusion,
        selected: outcomes.iter().map(|o| o.selected).collect(),
        inner_scores: outcomes.iter().map(|o| o.inner_scores.clone()).collect(),
        train_fingerprints: outcomes.iter().map(|o| o.train_fingerprint).collect(),
        fold_accuracies,
    })
}

/// Nested cross-validation, run sequentially over outer folds.
pub fn nested_cv<T: CvTask>(task: &T, grid: &[T::Params], seed: u64) -> Result<EvalReport> {
    if grid.is_empty() {
        return Err(invalid("empty hyperparameter grid"));
    }
    let plan = kfold_split(task.labels(), OUTER_FOLDS, seed)?;
    let outcomes = (0..OUTER_FOLDS)
        .map(|f| run_outer_fold(task, &plan, f, grid, seed))
        .collect::<Result<Vec<_>>>()?;
    assemble_report(outcomes, task.classes())
}

/// Nested CV of one classifier kind over `grid`.
pub fn grid_search_cv(set: &LabeledSet, grid: &[HyperParams], seed: u64) -> Result<EvalReport> {
    if let Some(first) = grid.first() {
        if grid.iter().any(|g| g.kind() != first.kind()) {
            return Err(invalid("grid mixes classifier kinds"));
        }
    }
    nested_cv(&ClassifierTask { set, standardize: true }, grid, seed)
}
