//! Experiment configuration: a flat JSON object whose keys mirror the CLI
//! flags. Grids are phrases understood by [`crate::grid::parse_grid`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wakecough_core::classifiers::{ClassifierKind, HyperParams, Kernel, LdaParams, LogRegParams, MlpParams, SvmParams};
use wakecough_core::cnn::CnnConfig;
use wakecough_core::cougher::FrontEndConfig;
use wakecough_core::embeddings::EmbeddingKind;
use wakecough_core::features::{FrameSpec, MfccConfig};
use wakecough_core::ivector::TvConfig;

use crate::error::{invalid, Error, Result};
use crate::grid::{resolve, resolve_usize, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CougherId,
    SpeakerId,
    Spotting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Name written in the dataset column of summaries.
    pub dataset: String,
    pub manifest: Option<PathBuf>,
    /// Precomputed embeddings CSV (required for x- and d-vectors).
    pub embeddings: Option<PathBuf>,
    /// `ivector`, `xvector` or `dvector`.
    pub feature: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub allow_offgrid: bool,

    pub subjects: String,
    pub seconds: String,
    pub subject_ids: Option<Vec<String>>,
    pub random_subjects: bool,
    pub classifiers: Vec<String>,
    pub standardize: bool,
    pub lr_c: String,
    pub lr_l1: String,
    pub lr_l2: String,
    pub svm_c: String,
    pub svm_gamma: String,
    pub svm_kernel: String,
    pub mlp_hidden: String,
    pub mlp_l2: String,
    pub lda_shrinkage: f64,

    pub components: usize,
    pub ubm_iters: usize,
    pub rank: usize,
    pub tv_iters: usize,
    pub length_norm: bool,
    /// Cepstral mean subtraction over each subject's concatenated clip.
    pub cms: bool,

    pub frame_len: String,
    pub frames: String,
    pub cnn_filters: String,
    pub cnn_kernel: String,
    pub cnn_dropout: String,
    pub cnn_dense: String,
    pub cnn_batch: String,
    pub cnn_epochs: String,
    /// Retrain the most selected CNN of the best cell on all events and
    /// save it with its training log.
    pub save_model: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fe = FrontEndConfig::default();
        Self {
            experiment: Experiment::CougherId,
            dataset: "synthetic".into(),
            manifest: None,
            embeddings: None,
            feature: "ivector".into(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            allow_offgrid: false,
            subjects: "5".into(),
            seconds: "20".into(),
            subject_ids: None,
            random_subjects: false,
            classifiers: vec!["mlp".into()],
            standardize: true,
            lr_c: "1, 100".into(),
            lr_l1: "0".into(),
            lr_l2: "0.05".into(),
            svm_c: "1, 10, 100".into(),
            svm_gamma: "0.001, 0.01".into(),
            svm_kernel: "rbf".into(),
            mlp_hidden: "150".into(),
            mlp_l2: "0".into(),
            lda_shrinkage: LdaParams::default().shrinkage,
            components: fe.components,
            ubm_iters: fe.ubm_iters,
            rank: fe.tv.rank,
            tv_iters: fe.tv.iters,
            length_norm: fe.length_norm,
            cms: false,
            frame_len: "1024".into(),
            frames: "100".into(),
            cnn_filters: "24".into(),
            cnn_kernel: "2, 3".into(),
            cnn_dropout: "0.1".into(),
            cnn_dense: "16, 32".into(),
            cnn_batch: "64".into(),
            cnn_epochs: "30".into(),
            save_model: false,
        }
    }
}

/// Grids of one classifier kind, expanded to hyperparameter points.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrid {
    pub kind: ClassifierKind,
    pub points: Vec<HyperParams>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serialises") + "\n"
    }

    pub fn feature_kind(&self) -> Result<EmbeddingKind> {
        EmbeddingKind::from_name(&self.feature)
            .ok_or_else(|| invalid(format!("unknown feature {:?} (ivector, xvector or dvector)", self.feature)))
    }

    pub fn subject_grid(&self) -> Result<Vec<usize>> {
        resolve_usize(Param::Subjects, &self.subjects, self.allow_offgrid)
    }

    pub fn seconds_grid(&self) -> Result<Vec<f64>> {
        resolve(Param::Seconds, &self.seconds, self.allow_offgrid)
    }

    pub fn classifier_kinds(&self) -> Result<Vec<ClassifierKind>> {
        if self.classifiers.is_empty() {
            return Err(invalid("no classifiers requested"));
        }
        let mut kinds = Vec::new();
        for name in &self.classifiers {
            let k = ClassifierKind::from_name(name)
                .ok_or_else(|| invalid(format!("unknown classifier {name:?} (lr, lda, svm or mlp)")))?;
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        // summaries list classifiers in a fixed order
        kinds.sort_by_key(|k| ClassifierKind::ALL.iter().position(|a| a == k));
        Ok(kinds)
    }

    pub fn classifier_grids(&self) -> Result<Vec<ClassifierGrid>> {
        let g = self.allow_offgrid;
        self.classifier_kinds()?
            .into_iter()
            .map(|kind| {
                let points = match kind {
                    ClassifierKind::LogReg => {
                        let (cs, l1s, l2s) =
                            (resolve(Param::LrC, &self.lr_c, g)?, resolve(Param::LrL1, &self.lr_l1, g)?, resolve(Param::LrL2, &self.lr_l2, g)?);
                        let mut pts = Vec::new();
                        for &c in &cs {
                            for &l1 in &l1s {
                                for &l2 in &l2s {
                                    pts.push(HyperParams::LogReg(LogRegParams::new(c, l1, l2)));
                                }
                            }
                        }
                        pts
                    }
                    ClassifierKind::Lda => {
                        if !(self.lda_shrinkage >= 0.0) {
                            return Err(invalid("lda_shrinkage must be non-negative"));
                        }
                        vec![HyperParams::Lda(LdaParams { shrinkage: self.lda_shrinkage })]
                    }
                    ClassifierKind::Svm => {
                        let kernel = match self.svm_kernel.as_str() {
                            "rbf" => Kernel::Rbf,
                            "linear" => Kernel::Linear,
                            k => return Err(invalid(format!("unknown SVM kernel {k:?}"))),
                        };
                        let (cs, gammas) = (resolve(Param::SvmC, &self.svm_c, g)?, resolve(Param::SvmGamma, &self.svm_gamma, g)?);
                        let mut pts = Vec::new();
                        for &c in &cs {
                            for &gamma in &gammas {
                                pts.push(HyperParams::Svm(SvmParams { kernel, ..SvmParams::rbf(c, gamma) }));
                            }
                        }
                        pts
                    }
                    ClassifierKind::Mlp => {
                        let (hs, l2s) = (resolve_usize(Param::MlpHidden, &self.mlp_hidden, g)?, resolve(Param::MlpL2, &self.mlp_l2, g)?);
                        let mut pts = Vec::new();
                        for &h in &hs {
                            for &l2 in &l2s {
                                pts.push(HyperParams::Mlp(MlpParams::new(h, l2)));
                            }
                        }
                        pts
                    }
                };
                Ok(ClassifierGrid { kind, points })
            })
            .collect()
    }

    pub fn front_end(&self) -> Result<FrontEndConfig> {
        if self.components == 0 || self.rank == 0 || self.ubm_iters == 0 || self.tv_iters == 0 {
            return Err(invalid("components, rank, ubm_iters and tv_iters must be positive"));
        }
        Ok(FrontEndConfig {
            components: self.components,
            ubm_iters: self.ubm_iters,
            tv: TvConfig { rank: self.rank, iters: self.tv_iters, ..TvConfig::default() },
            length_norm: self.length_norm,
        })
    }

    pub fn mfcc(&self) -> MfccConfig {
        MfccConfig { mean_subtraction: self.cms, ..MfccConfig::default() }
    }

    pub fn frame_specs(&self) -> Result<Vec<FrameSpec>> {
        let fs = resolve_usize(Param::FrameLen, &self.frame_len, self.allow_offgrid)?;
        let ss = resolve_usize(Param::NumFrames, &self.frames, self.allow_offgrid)?;
        let mut out = Vec::new();
        for &f in &fs {
            for &s in &ss {
                out.push(FrameSpec::new(f, s)?);
            }
        }
        Ok(out)
    }

    pub fn cnn_grid(&self) -> Result<Vec<CnnConfig>> {
        let g = self.allow_offgrid;
        let filters = resolve_usize(Param::CnnFilters, &self.cnn_filters, g)?;
        let kernels = resolve_usize(Param::CnnKernel, &self.cnn_kernel, g)?;
        let dropouts = resolve(Param::CnnDropout, &self.cnn_dropout, g)?;
        let denses = resolve_usize(Param::CnnDense, &self.cnn_dense, g)?;
        let batches = resolve_usize(Param::CnnBatch, &self.cnn_batch, g)?;
        let epochs = resolve_usize(Param::CnnEpochs, &self.cnn_epochs, g)?;
        if let Some(d) = dropouts.iter().find(|d| **d >= 1.0) {
            return Err(invalid(format!("--cnn-dropout: {d} must be below 1")));
        }
        let mut out = Vec::new();
        for &f in &filters {
            for &k in &kernels {
                for &d in &dropouts {
                    for &dense in &denses {
                        for &b in &batches {
                            for &e in &epochs {
                                out.push(CnnConfig {
                                    filters: f,
                                    kernel: k,
                                    dropout: d,
                                    dense,
                                    batch_size: b,
                                    epochs: e,
                                    ..CnnConfig::default()
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Resolves every grid the experiment uses, so bad values fail before
    /// any work starts.
    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            Experiment::CougherId | Experiment::SpeakerId => {
                let kind = self.feature_kind()?;
                if kind != EmbeddingKind::IVector && self.embeddings.is_none() {
                    return Err(invalid(format!("{} features need an embeddings file", kind.name())));
                }
                if self.manifest.is_none() && self.embeddings.is_none() {
                    return Err(invalid("a manifest or an embeddings file is required"));
                }
                self.subject_grid()?;
                self.seconds_grid()?;
                self.classifier_grids()?;
                if self.embeddings.is_none() {
                    self.front_end()?;
                }
            }
            Experiment::Spotting => {
                if self.manifest.is_none() {
                    return Err(invalid("spotting needs a manifest"));
                }
                self.frame_specs()?;
                self.cnn_grid()?;
            }
        }
        Ok(())
    }
}
