//! Two-block convolutional network over feature maps.
//!
//! Topology: input average pool → conv → ReLU → 2×2 max-pool → dropout →
//! conv → ReLU → 2×2 max-pool → dense → ReLU → dense → softmax. All
//! convolutions are "valid" and single-stride.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::classifiers::{argmax, softmax};
use crate::error::{invalid, Error, Result};
use crate::features::FeatureMap;
use crate::linalg::Matrix;
use crate::optim::Adam;
use crate::rng::{self, SeededRng};

/// Longest side of the network input after average pooling.
pub const AUTO_POOL_TARGET: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnConfig {
    pub filters: usize,
    pub kernel: usize,
    pub dropout: f64,
    pub dense: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Average-pool window over (rows, cols) applied to the input; `None`
    /// picks one that brings both sides to at most [`AUTO_POOL_TARGET`].
    pub input_pool: Option<(usize, usize)>,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            filters: 24,
            kernel: 3,
            dropout: 0.1,
            dense: 32,
            batch_size: 64,
            epochs: 10,
            learning_rate: 1e-3,
            seed: 0,
            input_pool: None,
        }
    }
}

impl CnnConfig {
    fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.kernel == 0 || self.dense == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(invalid("CNN sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn pool_for(&self, rows: usize, cols: usize) -> (usize, usize) {
        self.input_pool
            .unwrap_or((rows.div_ceil(AUTO_POOL_TARGET).max(1), cols.div_ceil(AUTO_POOL_TARGET).max(1)))
    }
}

/// Layer sizes for one input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnnShape {
    pub in_rows: usize,
    pub in_cols: usize,
    pub pool: (usize, usize),
    pub h0: usize,
    pub w0: usize,
    pub h1: usize,
    pub w1: usize,
    pub q1h: usize,
    pub q1w: usize,
    pub h2: usize,
    pub w2: usize,
    pub q2h: usize,
    pub q2w: usize,
    pub filters: usize,
    pub kernel: usize,
    pub dense: usize,
    pub classes: usize,
}

impl CnnShape {
    pub fn new(rows: usize, cols: usize, config: &CnnConfig, classes: usize) -> Result<Self> {
        config.validate()?;
        let pool = config.pool_for(rows, cols);
        if pool.0 == 0 || pool.1 == 0 {
            return Err(invalid("input pool must be positive"));
        }
        let k = config.kernel;
        let h0 = rows.div_ceil(pool.0);
        let w0 = cols.div_ceil(pool.1);
        let shrink = |n: usize| n.checked_sub(k - 1).filter(|&v| v > 0);
        let too_small = || invalid(alloc::format!("{rows}x{cols} input is too small for kernel {k}"));
        let h1 = shrink(h0).ok_or_else(too_small)?;
        let w1 = shrink(w0).ok_or_else(too_small)?;
        let (q1h, q1w) = (h1 / 2, w1 / 2);
        let h2 = shrink(q1h).ok_or_else(too_small)?;
        let w2 = shrink(q1w).ok_or_else(too_small)?;
        let (q2h, q2w) = (h2 / 2, w2 / 2);
        if q2h == 0 || q2w == 0 {
            return Err(too_small());
        }
        Ok(Self {
            in_rows: rows,
            in_cols: cols,
            pool,
            h0,
            w0,
            h1,
            w1,
            q1h,
            q1w,
            h2,
            w2,
            q2h,
            q2w,
            filters: config.filters,
            kernel: k,
            dense: config.dense,
            classes,
        })
    }

    pub fn flat(&self) -> usize {
        self.filters * self.q2h * self.q2w
    }

    fn layout(&self) -> Layout {
        let (f, k) = (self.filters, self.kernel);
        let w1 = 0;
        let b1 = w1 + f * k * k;
        let w2 = b1 + f;
        let b2 = w2 + f * f * k * k;
        let w3 = b2 + f;
        let b3 = w3 + self.dense * self.flat();
        let w4 = b3 + self.dense;
        let b4 = w4 + self.classes * self.dense;
        Layout { w1, b1, w2, b2, w3, b3, w4, b4, end: b4 + self.classes }
    }

    pub fn num_params(&self) -> usize {
        self.layout().end
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    w4: usize,
    b4: usize,
    end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub shape: CnnShape,
    pub params: Vec<f64>,
    /// Per-column z-normalisation of the raw map.
    pub norm_mean: Vec<f64>,
    pub norm_scale: Vec<f64>,
    pub log: Vec<EpochLog>,
}

/// Per-sample activations kept for the backward pass.
struct Workspace {
    x: Vec<f64>,
    z1: Vec<f64>,
    arg1: Vec<usize>,
    p1: Vec<f64>,
    mask: Vec<f64>,
    d1: Vec<f64>,
    z2: Vec<f64>,
    arg2: Vec<usize>,
    p2: Vec<f64>,
    zh: Vec<f64>,
    h: Vec<f64>,
    out: Vec<f64>,
    dz1: Vec<f64>,
    dd1: Vec<f64>,
    dz2: Vec<f64>,
    dh: Vec<f64>,
    dp2: Vec<f64>,
    cols1: Vec<f64>,
    cols2: Vec<f64>,
    dcols: Vec<f64>,
}

impl Workspace {
    fn new(s: &CnnShape) -> Self {
        let f = s.filters;
        Self {
            x: vec![0.0; s.h0 * s.w0],
            z1: vec![0.0; f * s.h1 * s.w1],
            arg1: vec![0; f * s.q1h * s.q1w],
            p1: vec![0.0; f * s.q1h * s.q1w],
            mask: vec![1.0; f * s.q1h * s.q1w],
            d1: vec![0.0; f * s.q1h * s.q1w],
            z2: vec![0.0; f * s.h2 * s.w2],
            arg2: vec![0; s.flat()],
            p2: vec![0.0; s.flat()],
            zh: vec![0.0; s.dense],
            h: vec![0.0; s.dense],
            out: vec![0.0; s.classes],
            dz1: vec![0.0; f * s.h1 * s.w1],
            dd1: vec![0.0; f * s.q1h * s.q1w],
            dz2: vec![0.0; f * s.h2 * s.w2],
            dh: vec![0.0; s.dense],
            dp2: vec![0.0; s.flat()],
            cols1: Vec::new(),
            cols2: Vec::new(),
            dcols: Vec::new(),
        }
    }
}

/// Patch matrix of a valid convolution: one row of `cin·k·k` inputs per
/// output position, ordered like the weights.
fn im2col(input: &[f64], cin: usize, h: usize, w: usize, k: usize, cols: &mut Vec<f64>) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    cols.clear();
    for i in 0..oh {
        for j in 0..ow {
            for f in 0..cin {
                let src = &input[f * h * w..(f + 1) * h * w];
                for a in 0..k {
                    cols.extend_from_slice(&src[(i + a) * w + j..(i + a) * w + j + k]);
                }
            }
        }
    }
}

/// Valid convolution of `cin` planes (`h x w`) into `cout` planes.
#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    k: usize,
    cols: &mut Vec<f64>,
    out: &mut [f64],
) {
    let npos = (h - k + 1) * (w - k + 1);
    let len = cin * k * k;
    im2col(input, cin, h, w, k, cols);
    for (g, plane) in out.chunks_exact_mut(npos).enumerate() {
        let wg = &weights[g * len..(g + 1) * len];
        for (o, patch) in plane.iter_mut().zip(cols.chunks_exact(len)) {
            *o = bias[g] + crate::linalg::dot(wg, patch);
        }
    }
}

/// Gradients of [`conv_forward`] given its patch matrix; `din` is skipped
/// when `None`.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    cols: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    k: usize,
    dout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    dcols: &mut Vec<f64>,
    din: Option<&mut [f64]>,
) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let npos = oh * ow;
    let len = cin * k * k;
    let want_din = din.is_some();
    if want_din {
        dcols.clear();
        dcols.resize(npos * len, 0.0);
    }
    for (g, plane) in dout.chunks_exact(npos).enumerate() {
        let wg = &weights[g * len..(g + 1) * len];
        let gwg = &mut gw[g * len..(g + 1) * len];
        for (pos, &d) in plane.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[g] += d;
            crate::linalg::axpy(d, &cols[pos * len..(pos + 1) * len], gwg);
            if want_din {
                crate::linalg::axpy(d, wg, &mut dcols[pos * len..(pos + 1) * len]);
            }
        }
    }
    if let Some(d) = din {
        d.iter_mut().for_each(|v| *v = 0.0);
        let mut patches = dcols.chunks_exact(len);
        for i in 0..oh {
            for j in 0..ow {
                let mut patch = patches.next().expect("one patch per position").iter();
                for f in 0..cin {
                    let dst = &mut d[f * h * w..(f + 1) * h * w];
                    for a in 0..k {
                        for (t, v) in dst[(i + a) * w + j..(i + a) * w + j + k].iter_mut().zip(patch.by_ref()) {
                            *t += v;
                        }
                    }
                }
            }
        }
    }
}

/// ReLU then 2×2 max-pool (floor); records the winning input index.
fn relu_maxpool(z: &[f64], c: usize, h: usize, w: usize, out: &mut [f64], arg: &mut [usize]) {
    let (ph, pw) = (h / 2, w / 2);
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..ph {
            for j in 0..pw {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if z[idx] > z[best] {
                        best = idx;
                    }
                }
                let o = ch * ph * pw + i * pw + j;
                out[o] = z[best].max(0.0);
                arg[o] = best;
            }
        }
    }
}

fn unpool_relu(dpool: &[f64], arg: &[usize], z: &[f64], dz: &mut [f64]) {
    dz.iter_mut().for_each(|v| *v = 0.0);
    for (d, &a) in dpool.iter().zip(arg) {
        if z[a] > 0.0 {
            dz[a] += d;
        }
    }
}

impl CnnModel {
    /// He-initialised hidden layers; the output layer starts at zero so
    /// the untrained network predicts the uniform distribution.
    pub fn init(config: CnnConfig, shape: CnnShape) -> Self {
        let l = shape.layout();
        let mut params = vec![0.0; l.end];
        let mut r = rng::seeded(config.seed);
        let k2 = (shape.kernel * shape.kernel) as f64;
        let fills = [
            (l.w1, l.b1, k2),
            (l.w2, l.b2, shape.filters as f64 * k2),
            (l.w3, l.b3, shape.flat() as f64),
        ];
        for (from, to, fan_in) in fills {
            let s = (2.0 / fan_in).sqrt();
            for v in &mut params[from..to] {
                *v = s * rng::normal(&mut r);
            }
        }
        Self {
            config,
            shape,
            params,
            norm_mean: vec![0.0; shape.in_cols],
            norm_scale: vec![1.0; shape.in_cols],
            log: Vec::new(),
        }
    }

    pub fn classes(&self) -> usize {
        self.shape.classes
    }

    /// Normalised, average-pooled network input for one map.
    pub fn prepare_input(&self, map: &FeatureMap) -> Result<Vec<f64>> {
        let s = &self.shape;
        if map.shape() != (s.in_rows, s.in_cols) {
            return Err(invalid(alloc::format!(
                "feature map is {}x{}, model expects {}x{}",
                map.rows,
                map.cols,
                s.in_rows,
                s.in_cols
            )));
        }
        let (pr, pc) = s.pool;
        let mut sum = vec![0.0; s.h0 * s.w0];
        let mut count = vec![0u32; s.h0 * s.w0];
        for r in 0..s.in_rows {
            let row = map.row(r);
            let base = (r / pr) * s.w0;
            for (c, &v) in row.iter().enumerate() {
                let z = (v as f64 - self.norm_mean[c]) / self.norm_scale[c];
                sum[base + c / pc] += z;
                count[base + c / pc] += 1;
            }
        }
        Ok(sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect())
    }

    fn forward(&self, x: &[f64], ws: &mut Workspace, dropout: Option<(&mut SeededRng, f64)>) {
        let s = &self.shape;
        let l = s.layout();
        let p = &self.params;
        let f = s.filters;
        ws.x.copy_from_slice(x);
        conv_forward(&ws.x, 1, s.h0, s.w0, &p[l.w1..l.b1], &p[l.b1..l.w2], s.kernel, &mut ws.cols1, &mut ws.z1);
        relu_maxpool(&ws.z1, f, s.h1, s.w1, &mut ws.p1, &mut ws.arg1);
        match dropout {
            Some((r, rate)) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                for m in ws.mask.iter_mut() {
                    *m = if rng::uniform(r) < rate { 0.0 } else { keep };
                }
            }
            _ => ws.mask.iter_mut().for_each(|m| *m = 1.0),
        }
        for ((d, v), m) in ws.d1.iter_mut().zip(&ws.p1).zip(&ws.mask) {
            *d = v * m;
        }
        conv_forward(&ws.d1, f, s.q1h, s.q1w, &p[l.w2..l.b2], &p[l.b2..l.w3], s.kernel, &mut ws.cols2, &mut ws.z2);
        relu_maxpool(&ws.z2, f, s.h2, s.w2, &mut ws.p2, &mut ws.arg2);
        let flat = s.flat();
        for u in 0..s.dense {
            let z = crate::linalg::dot(&p[l.w3 + u * flat..l.w3 + (u + 1) * flat], &ws.p2) + p[l.b3 + u];
            ws.zh[u] = z;
            ws.h[u] = z.max(0.0);
        }
        for c in 0..s.classes {
            ws.out[c] = crate::linalg::dot(&p[l.w4 + c * s.dense..l.w4 + (c + 1) * s.dense], &ws.h) + p[l.b4 + c];
        }
    }

    /// Cross-entropy of the last forward pass, accumulating `scale` times
    /// its gradient into `grad`.
    fn backward(&self, ws: &mut Workspace, label: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let s = &self.shape;
        let l = s.layout();
        let p = &self.params;
        let f = s.filters;
        let max = ws.out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + ws.out.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - ws.out[label];
        softmax(&mut ws.out);
        ws.out[label] -= 1.0;
        ws.out.iter_mut().for_each(|v| *v *= scale);

        ws.dh.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..s.classes {
            let g = ws.out[c];
            grad[l.b4 + c] += g;
            for u in 0..s.dense {
                grad[l.w4 + c * s.dense + u] += g * ws.h[u];
                ws.dh[u] += g * p[l.w4 + c * s.dense + u];
            }
        }
        let flat = s.flat();
        ws.dp2.iter_mut().for_each(|v| *v = 0.0);
        for u in 0..s.dense {
            if ws.zh[u] <= 0.0 {
                continue;
            }
            let g = ws.dh[u];
            grad[l.b3 + u] += g;
            crate::linalg::axpy(g, &ws.p2, &mut grad[l.w3 + u * flat..l.w3 + (u + 1) * flat]);
            crate::linalg::axpy(g, &p[l.w3 + u * flat..l.w3 + (u + 1) * flat], &mut ws.dp2);
        }
        unpool_relu(&ws.dp2, &ws.arg2, &ws.z2, &mut ws.dz2);
        let (gw2, rest) = grad[l.w2..l.w3].split_at_mut(l.b2 - l.w2);
        conv_backward(&ws.cols2, f, s.q1h, s.q1w, &p[l.w2..l.b2], s.kernel, &ws.dz2, gw2, rest, &mut ws.dcols, Some(&mut ws.dd1));
        for (d, m) in ws.dd1.iter_mut().zip(&ws.mask) {
            *d *= m;
        }
        unpool_relu(&ws.dd1, &ws.arg1, &ws.z1, &mut ws.dz1);
        let (gw1, rest) = grad[l.w1..l.w2].split_at_mut(l.b1 - l.w1);
        conv_backward(&ws.cols1, 1, s.h0, s.w0, &p[l.w1..l.b1], s.kernel, &ws.dz1, gw1, rest, &mut ws.dcols, None);
        loss
    }

    /// Mean cross-entropy over `rows` of prepared inputs and its gradient.
    /// Dropout is applied only when `dropout_rng` is given.
    pub fn loss_and_grad(
        &self,
        inputs: &[Vec<f64>],
        labels: &[usize],
        rows: &[usize],
        mut dropout_rng: Option<&mut SeededRng>,
    ) -> (f64, Vec<f64>, usize) {
        let mut ws = Workspace::new(&self.shape);
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / rows.len().max(1) as f64;
        let mut loss = 0.0;
        let mut correct = 0;
        for &r in rows {
            let drop = dropout_rng.as_deref_mut().map(|g| (g, self.config.dropout));
            self.forward(&inputs[r], &mut ws, drop);
            if argmax(&ws.out) == labels[r] {
                correct += 1;
            }
            loss += self.backward(&mut ws, labels[r], scale, &mut grad);
        }
        (loss * scale, grad, correct)
    }

    /// Class probabilities for one map; dropout is off.
    pub fn predict(&self, map: &FeatureMap) -> Result<Vec<f64>> {
        let x = self.prepare_input(map)?;
        let mut ws = Workspace::new(&self.shape);
        self.forward(&x, &mut ws, None);
        let mut out = ws.out.clone();
        softmax(&mut out);
        Ok(out)
    }

    pub fn predict_batch(&self, maps: &[FeatureMap]) -> Result<Matrix> {
        let mut out = Matrix::zeros(maps.len(), self.classes());
        let mut ws = Workspace::new(&self.shape);
        for (i, m) in maps.iter().enumerate() {
            let x = self.prepare_input(m)?;
            self.forward(&x, &mut ws, None);
            let o = out.row_mut(i);
            o.copy_from_slice(&ws.out);
            softmax(o);
        }
        Ok(out)
    }
}

fn column_stats(maps: &[&FeatureMap], cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; cols];
    let mut n = 0.0;
    for m in maps {
        for r in 0..m.rows {
            for (acc, v) in mean.iter_mut().zip(m.row(r)) {
                *acc += *v as f64;
            }
            n += 1.0;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; cols];
    for m in maps {
        for r in 0..m.rows {
            for ((acc, v), mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
                let d = *v as f64 - mu;
                *acc += d * d;
            }
        }
    }
    let scale = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 { sd } else { 1.0 }
        })
        .collect();
    (mean, scale)
}

/// Trains on `maps` with labels in `0..classes`.
pub fn train_cnn(maps: &[&FeatureMap], labels: &[usize], classes: usize, config: &CnnConfig) -> Result<CnnModel> {
    crate::error::check_dim(maps.len(), labels.len())?;
    let first = maps.first().ok_or_else(|| invalid("no training maps"))?;
    let (rows, cols) = first.shape();
    if let Some(bad) = maps.iter().find(|m| m.shape() != (rows, cols)) {
        return Err(invalid(alloc::format!(
            "inconsistent map shapes: {}x{} and {}x{}",
            rows,
            cols,
            bad.rows,
            bad.cols
        )));
    }
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(invalid(alloc::format!("label {l} outside 0..{classes}")));
        }
        counts[l] += 1;
    }
    if classes < 2 || counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(invalid("every class needs at least one map"));
    }
    if maps.iter().any(|m| m.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("feature map"));
    }
    let shape = CnnShape::new(rows, cols, config, classes)?;
    let mut model = CnnModel::init(*config, shape);
    let (mean, scale) = column_stats(maps, cols);
    model.norm_mean = mean;
    model.norm_scale = scale;
    let inputs = maps.iter().map(|m| model.prepare_input(m)).collect::<Result<Vec<_>>>()?;

    let mut adam = Adam::new(model.params.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..maps.len()).collect();
    let mut shuffle_rng = rng::derive(config.seed, 1);
    let mut drop_rng = rng::derive(config.seed, 2);
    for epoch in 1..=config.epochs {
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grad, hits) = model.loss_and_grad(&inputs, labels, batch, Some(&mut drop_rng));
            loss_sum += loss * batch.len() as f64;
            correct += hits;
            adam.step(&mut model.params, &grad);
        }
        let n = maps.len() as f64;
        let log = EpochLog { epoch, loss: loss_sum / n, accuracy: correct as f64 / n };
        if !log.loss.is_finite() {
            return Err(Error::NonFinite("CNN training loss"));
        }
        model.log.push(log);
    }
    Ok(model)
}

pub fn predict_cnn(model: &CnnModel, map: &FeatureMap) -> Result<Vec<f64>> {
    model.predict(map)
}

/// Spotting as a cross-validation task; each grid point is a config
/// whose seed is replaced by the fold seed.
pub struct CnnTask<'a> {
    pub maps: &'a [FeatureMap],
    pub labels: &'a [usize],
    pub classes: usize,
}

impl crate::eval::CvTask for CnnTask<'_> {
    type Params = CnnConfig;
    type Prepared = ();

    fn labels(&self) -> &[usize] {
        self.labels
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn prepare(&self, _train: &[usize], _seed: u64) -> Result<()> {
        Ok(())
    }

    fn fit_predict(&self, _prep: &(), params: &CnnConfig, train: &[usize], test: &[usize], seed: u64) -> Result<Vec<usize>> {
        let maps: Vec<&FeatureMap> = train.iter().map(|&i| &self.maps[i]).collect();
        let labels: Vec<usize> = train.iter().map(|&i| self.labels[i]).collect();
        let model = train_cnn(&maps, &labels, self.classes, &CnnConfig { seed, ..*params })?;
        test.iter().map(|&i| Ok(argmax(&model.predict(&self.maps[i])?))).collect()
    }
}

/// Largest relative error between analytic gradients and central
/// differences (step 1e-4) on a random 8×8, 4-sample, 4-filter instance.
/// Relative errors use `max(|a|, |fd|, 1e-6)` as denominator.
pub fn gradient_check_cnn(seed: u64) -> Result<f64> {
    let config = CnnConfig { filters: 4, kernel: 2, dense: 6, dropout: 0.0, seed, input_pool: Some((1, 1)), ..CnnConfig::default() };
    let shape = CnnShape::new(8, 8, &config, 3)?;
    let mut model = CnnModel::init(config, shape);
    let mut r = rng::derive(seed, 7);
    for v in model.params.iter_mut() {
        *v += 0.1 * rng::normal(&mut r);
    }
    let inputs: Vec<Vec<f64>> = (0..4).map(|_| (0..64).map(|_| rng::normal(&mut r)).collect()).collect();
    let labels = [0, 1, 2, 1];
    Ok(max_gradient_error(&mut model, &inputs, &labels, 1e-4))
}

pub(crate) fn max_gradient_error(model: &mut CnnModel, inputs: &[Vec<f64>], labels: &[usize], h: f64) -> f64 {
    let rows: Vec<usize> = (0..inputs.len()).collect();
    let (_, grad, _) = model.loss_and_grad(inputs, labels, &rows, None);
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let orig = model.params[i];
        model.params[i] = orig + h;
        let up = model.loss_and_grad(inputs, labels, &rows, None).0;
        model.params[i] = orig - h;
        let down = model.loss_and_grad(inputs, labels, &rows, None).0;
        model.params[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}
