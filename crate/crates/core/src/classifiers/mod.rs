//! Cougher classifiers: multinomial logistic regression, LDA, one-vs-rest
//! RBF SVM and a one-hidden-layer MLP. Every model standardises its inputs
//! with statistics from its own training data.

use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::Matrix;

pub mod lda;
pub mod logreg;
pub mod mlp;
pub mod svm;

pub use lda::{train_lda, LdaModel, LdaParams};
pub use logreg::{train_logreg, LogRegModel, LogRegParams};
pub use mlp::{train_mlp, MlpModel, MlpParams};
pub use svm::{train_svm, Kernel, SvmModel, SvmParams};

/// Feature rows with integer class labels `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub classes: usize,
}

impl LabeledSet {
    /// Checks labels are in range, every class is present and all
    /// features are finite.
    pub fn new(x: Matrix, y: Vec<usize>, classes: usize) -> Result<Self> {
        check_dim(x.rows(), y.len())?;
        if !x.is_finite() {
            return Err(Error::NonFinite("features"));
        }
        let mut counts = vec![0usize; classes];
        for &label in &y {
            if label >= classes {
                return Err(invalid(alloc::format!("label {label} outside 0..{classes}")));
            }
            counts[label] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(invalid("every class needs at least one row"));
        }
        Ok(Self { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for &l in &self.y {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `idx` as a new set; labels are kept, so a subset may miss classes.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
        }
    }

    pub(crate) fn require_multiclass(&self) -> Result<()> {
        let present = self.class_counts().iter().filter(|&&c| c > 0).count();
        if self.classes < 2 || present < 2 {
            return Err(Error::SingleClass);
        }
        Ok(())
    }
}

/// Per-dimension z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Population mean and standard deviation per column; constant
    /// columns get scale 1.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for r in x.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x.row_iter() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.dim(), x.cols())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Hyperparameters for one classifier kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperParams {
    LogReg(LogRegParams),
    Lda(LdaParams),
    Svm(SvmParams),
    Mlp(MlpParams),
}

impl HyperParams {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            HyperParams::LogReg(_) => ClassifierKind::LogReg,
            HyperParams::Lda(_) => ClassifierKind::Lda,
            HyperParams::Svm(_) => ClassifierKind::Svm,
            HyperParams::Mlp(_) => ClassifierKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    LogReg,
    Lda,
    Svm,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] =
        [ClassifierKind::LogReg, ClassifierKind::Lda, ClassifierKind::Svm, ClassifierKind::Mlp];

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::LogReg => "lr",
            ClassifierKind::Lda => "lda",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Mlp => "mlp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedParams {
    LogReg(LogRegModel),
    Lda(LdaModel),
    Svm(SvmModel),
    Mlp(MlpModel),
}

/// A trained classifier with its input standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub hyper: HyperParams,
    pub standardizer: Standardizer,
    pub classes: usize,
    pub params: TrainedParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// Row-wise class probabilities for kinds that define them.
    pub probabilities: Option<Matrix>,
}

/// Trains any of the four kinds; `seed` only matters for the MLP.
pub fn train(set: &LabeledSet, hyper: &HyperParams, seed: u64, standardize: bool) -> Result<ClassifierModel> {
    set.require_multiclass()?;
    if !set.x.is_finite() {
        return Err(Error::NonFinite("features"));
    }
    let standardizer = if standardize { Standardizer::fit(&set.x) } else { Standardizer::identity(set.dim()) };
    let z = LabeledSet { x: standardizer.apply(&set.x)?, y: set.y.clone(), classes: set.classes };
    let params = match hyper {
        HyperParams::LogReg(p) => TrainedParams::LogReg(logreg::fit(&z, p)?),
        HyperParams::Lda(p) => TrainedParams::Lda(lda::fit(&z, p)?),
        HyperParams::Svm(p) => TrainedParams::Svm(svm::fit(&z, p)?),
        HyperParams::Mlp(p) => TrainedParams::Mlp(mlp::fit(&z, p, seed)?),
    };
    Ok(ClassifierModel { hyper: *hyper, standardizer, classes: set.classes, params })
}

impl ClassifierModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Prediction> {
        predict(self, x)
    }
}

/// Labels (and probabilities for LR, LDA and MLP) for every row of `x`.
pub fn predict(model: &ClassifierModel, x: &Matrix) -> Result<Prediction> {
    if x.rows() == 0 {
        return Ok(Prediction { labels: Vec::new(), probabilities: None });
    }
    let z = model.standardizer.apply(x)?;
    let scores = match &model.params {
        TrainedParams::LogReg(m) => m.probabilities(&z)?,
        TrainedParams::Lda(m) => m.probabilities(&z)?,
        TrainedParams::Svm(m) => m.decision_values(&z)?,
        TrainedParams::Mlp(m) => m.probabilities(&z)?,
    };
    let labels = scores.row_iter().map(argmax).collect();
    let probabilities = match model.params {
        TrainedParams::Svm(_) => None,
        _ => Some(scores),
    };
    Ok(Prediction { labels, probabilities })
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        softmax(m.row_mut(i));
    }
}

pub(crate) fn softmax(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = Float::exp(*v - max);
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
