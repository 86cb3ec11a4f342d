//! Cougher identification from i-vectors: a front end (UBM + total
//! variability) fitted on training utterances only, feeding any of the
//! classifiers under nested cross-validation.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::classifiers::{self, HyperParams, LabeledSet};
use crate::error::{check_dim, invalid, Error, Result};
use crate::eval::CvTask;
use crate::ivector::{accumulate_stats, train_tv, TvConfig, TvModel};
use crate::linalg::Matrix;
use crate::rng;
use crate::ubm::{em_fit, DiagGmm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontEndConfig {
    pub components: usize,
    pub ubm_iters: usize,
    pub tv: TvConfig,
    /// Scale every i-vector to unit length before classification.
    pub length_norm: bool,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self { components: 64, ubm_iters: 20, tv: TvConfig::default(), length_norm: true }
    }
}

#[derive(Debug, Clone)]
pub struct IvectorFrontEnd {
    pub ubm: DiagGmm,
    pub tv: TvModel,
    pub ubm_log_likelihoods: Vec<f64>,
    pub tv_objective: Vec<f64>,
}

/// Fits the UBM on the pooled frames of `train` utterances, then the
/// total-variability matrix on their statistics.
pub fn fit_front_end(utterances: &[Matrix], train: &[usize], config: &FrontEndConfig, seed: u64) -> Result<IvectorFrontEnd> {
    let first = train.first().ok_or_else(|| invalid("no training utterances"))?;
    let d = utterances[*first].cols();
    let total: usize = train.iter().map(|&i| utterances[i].rows()).sum();
    let mut pooled = Vec::with_capacity(total * d);
    for &i in train {
        check_dim(d, utterances[i].cols())?;
        pooled.extend_from_slice(utterances[i].as_slice());
    }
    let frames = Matrix::from_vec(total, d, pooled)?;
    let fit = em_fit(&frames, config.components, config.ubm_iters, rng::mix(seed, &[1]))?;
    let stats = train
        .iter()
        .map(|&i| accumulate_stats(&fit.gmm, &utterances[i]))
        .collect::<Result<Vec<_>>>()?;
    let tv_cfg = TvConfig { seed: rng::mix(seed, &[2]), ..config.tv };
    let tv = train_tv(&fit.gmm, &stats, &tv_cfg)?;
    Ok(IvectorFrontEnd { ubm: fit.gmm, tv: tv.model, ubm_log_likelihoods: fit.log_likelihoods, tv_objective: tv.objective })
}

impl IvectorFrontEnd {
    /// One i-vector row per utterance.
    pub fn extract_all(&self, utterances: &[Matrix], length_norm: bool) -> Result<Matrix> {
        let ex = self.tv.extractor();
        let r = self.tv.rank();
        let mut out = Matrix::zeros(utterances.len(), r);
        for (i, u) in utterances.iter().enumerate() {
            let stats = accumulate_stats(&self.ubm, u)?;
            let mut w = ex.extract(&stats)?;
            if length_norm {
                let n = crate::linalg::norm(&w);
                if n > 0.0 {
                    w.iter_mut().for_each(|v| *v /= n);
                }
            }
            out.row_mut(i).copy_from_slice(&w);
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("i-vectors"));
        }
        Ok(out)
    }
}

/// Utterance-level cougher identification with per-fold i-vector front end.
pub struct IvectorTask<'a> {
    pub utterances: &'a [Matrix],
    pub labels: &'a [usize],
    pub classes: usize,
    pub front_end: FrontEndConfig,
    pub standardize: bool,
}

pub struct PreparedFold {
    pub front_end: IvectorFrontEnd,
    pub ivectors: Matrix,
}

impl CvTask for IvectorTask<'_> {
    type Params = HyperParams;
    type Prepared = PreparedFold;

    fn labels(&self) -> &[usize] {
        self.labels
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn prepare(&self, train: &[usize], seed: u64) -> Result<PreparedFold> {
        let front_end = fit_front_end(self.utterances, train, &self.front_end, seed)?;
        let ivectors = front_end.extract_all(self.utterances, self.front_end.length_norm)?;
        Ok(PreparedFold { front_end, ivectors })
    }

    fn fit_predict(
        &self,
        prep: &PreparedFold,
        params: &HyperParams,
        train: &[usize],
        test: &[usize],
        seed: u64,
    ) -> Result<Vec<usize>> {
        let y = train.iter().map(|&i| self.labels[i]).collect();
        let set = LabeledSet { x: prep.ivectors.select_rows(train), y, classes: self.classes };
        let model = classifiers::train(&set, params, seed, self.standardize)?;
        Ok(model.predict(&prep.ivectors.select_rows(test))?.labels)
    }
}
