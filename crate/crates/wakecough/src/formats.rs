//! Little-endian binary files: feature maps (`FMAP`), UBMs (`DGMM`),
//! total-variability matrices (`TVMX`), classifiers (`WCLF`) and CNNs
//! (`WCNN`).

use std::path::Path;

use wakecough_core::classifiers::{
    ClassifierModel, HyperParams, Kernel, LdaModel, LdaParams, LogRegModel, LogRegParams, MlpModel, MlpParams,
    Standardizer, SvmModel, SvmParams, TrainedParams,
};
use wakecough_core::cnn::{CnnConfig, CnnModel, CnnShape, EpochLog};
use wakecough_core::features::FeatureMap;
use wakecough_core::ivector::TvModel;
use wakecough_core::linalg::Matrix;
use wakecough_core::ubm::DiagGmm;

use crate::error::{Error, Result};

const CLASSIFIER_VERSION: u32 = 1;
const CNN_VERSION: u32 = 1;

#[derive(Default)]
pub struct Writer(pub Vec<u8>);

impl Writer {
    pub fn magic(&mut self, m: &[u8; 4]) -> &mut Self {
        self.0.extend_from_slice(m);
        self
    }
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        v.iter().for_each(|&x| {
            self.f64(x);
        });
        self
    }
    fn len(&mut self, n: usize) -> &mut Self {
        self.u32(n as u32)
    }
    fn vec(&mut self, v: &[f64]) -> &mut Self {
        self.len(v.len()).f64s(v)
    }
    fn matrix(&mut self, m: &Matrix) -> &mut Self {
        self.len(m.rows()).len(m.cols()).f64s(m.as_slice())
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    pub fn magic(&mut self, m: &[u8; 4]) -> std::result::Result<(), String> {
        let got = self.take(4)?;
        if got != m {
            return Err(format!("bad magic: expected {:?}", std::str::from_utf8(m).unwrap_or("?")));
        }
        Ok(())
    }
    pub fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        Ok(self.take(n.checked_mul(8).ok_or("size overflow")?)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn len(&mut self) -> std::result::Result<usize, String> {
        Ok(self.u32()? as usize)
    }
    fn vec(&mut self) -> std::result::Result<Vec<f64>, String> {
        let n = self.len()?;
        self.f64s(n)
    }
    fn matrix(&mut self) -> std::result::Result<Matrix, String> {
        let (r, c) = (self.len()?, self.len()?);
        let data = self.f64s(r.checked_mul(c).ok_or("size overflow")?)?;
        Matrix::from_vec(r, c, data).map_err(|e| e.to_string())
    }
    pub fn finish(&self) -> std::result::Result<(), String> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.buf.len() - self.pos))
        }
    }
}

fn save(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn load<T>(path: &Path, parse: impl FnOnce(&mut Reader) -> std::result::Result<T, String>) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes);
    let out = parse(&mut r).and_then(|v| r.finish().map(|_| v));
    out.map_err(|m| Error::format(path, m))
}

pub fn encode_feature_map(map: &FeatureMap) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"FMAP").len(map.rows).len(map.cols);
    for &v in &map.values {
        w.0.extend_from_slice(&v.to_le_bytes());
    }
    w.0
}

pub fn decode_feature_map(r: &mut Reader) -> std::result::Result<FeatureMap, String> {
    r.magic(b"FMAP")?;
    let (rows, cols) = (r.len()?, r.len()?);
    let raw = r.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).ok_or("size overflow")?)?;
    let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    FeatureMap::new(rows, cols, values).map_err(|e| e.to_string())
}

pub fn save_feature_map(path: &Path, map: &FeatureMap) -> Result<()> {
    save(path, &encode_feature_map(map))
}

pub fn load_feature_map(path: &Path) -> Result<FeatureMap> {
    load(path, decode_feature_map)
}

pub fn encode_gmm(gmm: &DiagGmm) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"DGMM").len(gmm.num_components()).len(gmm.dim());
    w.f64s(&gmm.weights).f64s(gmm.means.as_slice()).f64s(gmm.variances.as_slice());
    w.0
}

pub fn decode_gmm(r: &mut Reader) -> std::result::Result<DiagGmm, String> {
    r.magic(b"DGMM")?;
    let (c, d) = (r.len()?, r.len()?);
    let n = c.checked_mul(d).ok_or("size overflow")?;
    let weights = r.f64s(c)?;
    let means = Matrix::from_vec(c, d, r.f64s(n)?).map_err(|e| e.to_string())?;
    let variances = Matrix::from_vec(c, d, r.f64s(n)?).map_err(|e| e.to_string())?;
    DiagGmm::new(weights, means, variances).map_err(|e| e.to_string())
}

pub fn save_gmm(path: &Path, gmm: &DiagGmm) -> Result<()> {
    save(path, &encode_gmm(gmm))
}

pub fn load_gmm(path: &Path) -> Result<DiagGmm> {
    load(path, decode_gmm)
}

pub fn encode_tv(tv: &TvModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"TVMX").len(tv.components).len(tv.dim).len(tv.rank()).f64s(tv.t.as_slice());
    w.0
}

/// The UBM supplies the covariances the matrix was trained against.
pub fn decode_tv(r: &mut Reader, ubm: &DiagGmm) -> std::result::Result<TvModel, String> {
    r.magic(b"TVMX")?;
    let (c, d, rank) = (r.len()?, r.len()?, r.len()?);
    if (c, d) != (ubm.num_components(), ubm.dim()) {
        return Err(format!("matrix is for C={c}, D={d} but the UBM has C={}, D={}", ubm.num_components(), ubm.dim()));
    }
    let rows = c.checked_mul(d).ok_or("size overflow")?;
    let t = Matrix::from_vec(rows, rank, r.f64s(rows.checked_mul(rank).ok_or("size overflow")?)?).map_err(|e| e.to_string())?;
    TvModel::new(t, ubm).map_err(|e| e.to_string())
}

pub fn save_tv(path: &Path, tv: &TvModel) -> Result<()> {
    save(path, &encode_tv(tv))
}

pub fn load_tv(path: &Path, ubm: &DiagGmm) -> Result<TvModel> {
    load(path, |r| decode_tv(r, ubm))
}

fn kind_tag(h: &HyperParams) -> u32 {
    match h {
        HyperParams::LogReg(_) => 0,
        HyperParams::Lda(_) => 1,
        HyperParams::Svm(_) => 2,
        HyperParams::Mlp(_) => 3,
    }
}

pub fn encode_classifier(m: &ClassifierModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"WCLF").u32(CLASSIFIER_VERSION).u32(kind_tag(&m.hyper)).len(m.classes);
    w.vec(&m.standardizer.mean).vec(&m.standardizer.scale);
    match (&m.hyper, &m.params) {
        (HyperParams::LogReg(h), TrainedParams::LogReg(p)) => {
            w.f64(h.c).f64(h.l1).f64(h.l2).len(h.max_iters).f64(h.tol);
            w.matrix(&p.weights).vec(&p.bias).len(p.iterations).u32(p.converged as u32).f64(p.objective);
        }
        (HyperParams::Lda(h), TrainedParams::Lda(p)) => {
            w.f64(h.shrinkage);
            w.matrix(&p.means).matrix(&p.covariance).vec(&p.priors).matrix(&p.coef).vec(&p.intercept);
        }
        (HyperParams::Svm(h), TrainedParams::Svm(p)) => {
            let kernel = match h.kernel {
                Kernel::Rbf => 0,
                Kernel::Linear => 1,
            };
            w.f64(h.c).f64(h.gamma).u32(kernel).f64(h.tol);
            w.matrix(&p.support).matrix(&p.coef).vec(&p.rho);
        }
        (HyperParams::Mlp(h), TrainedParams::Mlp(p)) => {
            w.len(h.hidden).f64(h.l2).len(h.epochs).f64(h.learning_rate).len(h.batch_size);
            w.len(p.dim).len(p.hidden).len(p.classes).vec(&p.params).f64(p.final_loss);
        }
        _ => unreachable!("hyperparameters and trained parameters always share a kind"),
    }
    w.0
}

pub fn decode_classifier(r: &mut Reader) -> std::result::Result<ClassifierModel, String> {
    r.magic(b"WCLF")?;
    let version = r.u32()?;
    if version != CLASSIFIER_VERSION {
        return Err(format!("unsupported classifier file version {version}"));
    }
    let tag = r.u32()?;
    let classes = r.len()?;
    let standardizer = Standardizer { mean: r.vec()?, scale: r.vec()? };
    let (hyper, params) = match tag {
        0 => {
            let h = LogRegParams { c: r.f64()?, l1: r.f64()?, l2: r.f64()?, max_iters: r.len()?, tol: r.f64()? };
            let p = LogRegModel {
                weights: r.matrix()?,
                bias: r.vec()?,
                iterations: r.len()?,
                converged: r.u32()? != 0,
                objective: r.f64()?,
            };
            (HyperParams::LogReg(h), TrainedParams::LogReg(p))
        }
        1 => {
            let h = LdaParams { shrinkage: r.f64()? };
            let p = LdaModel {
                means: r.matrix()?,
                covariance: r.matrix()?,
                priors: r.vec()?,
                coef: r.matrix()?,
                intercept: r.vec()?,
            };
            (HyperParams::Lda(h), TrainedParams::Lda(p))
        }
        2 => {
            let (c, gamma) = (r.f64()?, r.f64()?);
            let kernel = match r.u32()? {
                0 => Kernel::Rbf,
                1 => Kernel::Linear,
                k => return Err(format!("unknown kernel tag {k}")),
            };
            let params = SvmParams { c, gamma, kernel, tol: r.f64()? };
            let p = SvmModel { params, support: r.matrix()?, coef: r.matrix()?, rho: r.vec()? };
            (HyperParams::Svm(params), TrainedParams::Svm(p))
        }
        3 => {
            let h = MlpParams {
                hidden: r.len()?,
                l2: r.f64()?,
                epochs: r.len()?,
                learning_rate: r.f64()?,
                batch_size: r.len()?,
            };
            let p = MlpModel { dim: r.len()?, hidden: r.len()?, classes: r.len()?, params: r.vec()?, final_loss: r.f64()? };
            (HyperParams::Mlp(h), TrainedParams::Mlp(p))
        }
        t => return Err(format!("unknown classifier tag {t}")),
    };
    Ok(ClassifierModel { hyper, standardizer, classes, params })
}

pub fn save_classifier(path: &Path, m: &ClassifierModel) -> Result<()> {
    save(path, &encode_classifier(m))
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    load(path, decode_classifier)
}

pub fn encode_cnn(m: &CnnModel) -> Vec<u8> {
    let c = &m.config;
    let mut w = Writer::default();
    w.magic(b"WCNN").u32(CNN_VERSION);
    w.len(c.filters).len(c.kernel).f64(c.dropout).len(c.dense).len(c.batch_size).len(c.epochs);
    w.f64(c.learning_rate).u64(c.seed).u32(c.input_pool.is_some() as u32).len(m.shape.pool.0).len(m.shape.pool.1);
    w.len(m.shape.in_rows).len(m.shape.in_cols).len(m.shape.classes);
    w.vec(&m.norm_mean).vec(&m.norm_scale).vec(&m.params);
    w.len(m.log.len());
    for l in &m.log {
        w.len(l.epoch).f64(l.loss).f64(l.accuracy);
    }
    w.0
}

pub fn decode_cnn(r: &mut Reader) -> std::result::Result<CnnModel, String> {
    r.magic(b"WCNN")?;
    let version = r.u32()?;
    if version != CNN_VERSION {
        return Err(format!("unsupported CNN file version {version}"));
    }
    let mut config = CnnConfig {
        filters: r.len()?,
        kernel: r.len()?,
        dropout: r.f64()?,
        dense: r.len()?,
        batch_size: r.len()?,
        epochs: r.len()?,
        learning_rate: r.f64()?,
        seed: r.u64()?,
        input_pool: None,
    };
    let explicit = r.u32()? != 0;
    let pool = (r.len()?, r.len()?);
    if explicit {
        config.input_pool = Some(pool);
    }
    let (rows, cols, classes) = (r.len()?, r.len()?, r.len()?);
    let shape = CnnShape::new(rows, cols, &config, classes).map_err(|e| e.to_string())?;
    if shape.pool != pool {
        return Err("stored input pool does not match the stored shape".into());
    }
    let mut model = CnnModel::init(config, shape);
    let (mean, scale, params) = (r.vec()?, r.vec()?, r.vec()?);
    if params.len() != model.params.len() || mean.len() != cols || scale.len() != cols {
        return Err("parameter count does not match the stored shape".into());
    }
    model.norm_mean = mean;
    model.norm_scale = scale;
    model.params = params;
    let n = r.len()?;
    for _ in 0..n {
        model.log.push(EpochLog { epoch: r.len()?, loss: r.f64()?, accuracy: r.f64()? });
    }
    Ok(model)
}

pub fn save_cnn(path: &Path, m: &CnnModel) -> Result<()> {
    save(path, &encode_cnn(m))
}

pub fn load_cnn(path: &Path) -> Result<CnnModel> {
    load(path, decode_cnn)
}
