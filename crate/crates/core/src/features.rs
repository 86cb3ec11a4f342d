//! Frame-level features.
//!
//! Spotting uses a fixed-size map per event: the clip is cut into exactly
//! `S` frames of `F` samples (the hop adapts to the clip length) and each
//! frame contributes its log-magnitude spectrum, zero-crossing rate and
//! kurtosis. The i-vector stack uses a conventional MFCC front end.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::audio::AudioClip;
use crate::error::{check_dim, invalid, Error, Result};
use crate::fft::{self, is_power_of_two};
use crate::linalg::Matrix;

/// Frame length `F` (samples) and frame count `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameSpec {
    pub frame_len: usize,
    pub num_frames: usize,
}

impl FrameSpec {
    pub fn new(frame_len: usize, num_frames: usize) -> Result<Self> {
        if frame_len < 2 || num_frames < 2 {
            return Err(invalid("frame length and frame count must both be at least 2"));
        }
        Ok(Self { frame_len, num_frames })
    }

    /// Columns per frame: `F/2 + 1` spectral bins, ZCR and kurtosis.
    pub fn feature_dim(&self) -> usize {
        self.frame_len / 2 + 3
    }
}

/// `S × D` per-event feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        check_dim(rows * cols, values.len())?;
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Start offsets of exactly `S` frames of length `F` covering `L` samples.
///
/// The hop is `(L − F)/(S − 1)` and offsets are rounded to the nearest
/// sample, so the first frame starts at 0 and the last ends at `L`.
/// Inputs shorter than one frame are treated as `L = F`.
pub fn plan_frames(num_samples: usize, frame_len: usize, num_frames: usize) -> Result<Vec<usize>> {
    let spec = FrameSpec::new(frame_len, num_frames)?;
    let span = num_samples.max(spec.frame_len) - spec.frame_len;
    let gaps = spec.num_frames - 1;
    // round(i·span/gaps) in integer arithmetic, halves rounding up
    Ok((0..spec.num_frames)
        .map(|i| (2 * i * span + gaps) / (2 * gaps))
        .collect())
}

/// Fraction of adjacent sample pairs whose sign differs (zero counts as positive).
pub fn zcr(frame: &[f64]) -> Result<f64> {
    if frame.len() < 2 {
        return Err(Error::TooShort { needed: 2, have: frame.len() });
    }
    let flips = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    Ok(flips as f64 / (frame.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kurtosis {
    pub value: f64,
    /// Set when the frame variance is at or below `1e-12`; `value` is then 0.
    pub degenerate: bool,
}

/// Pearson (non-excess) kurtosis `m4 / m2²`.
pub fn kurtosis(frame: &[f64]) -> Result<Kurtosis> {
    if frame.len() < 4 {
        return Err(Error::TooShort { needed: 4, have: frame.len() });
    }
    let n = frame.len() as f64;
    let mean = frame.iter().sum::<f64>() / n;
    let (m2, m4) = frame.iter().fold((0.0, 0.0), |(a, b), &x| {
        let d = (x - mean) * (x - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 <= 1e-12 {
        return Ok(Kurtosis { value: 0.0, degenerate: true });
    }
    Ok(Kurtosis { value: m4 / (m2 * m2), degenerate: false })
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Hamming-windowed magnitude spectrum, bins `0..=F/2`.
///
/// The DC and Nyquist bins are scaled by `1/√2` so that the one-sided
/// spectrum satisfies `Σ|X_k|² = (F/2)·Σ(w·x)²`.
pub fn stft_magnitude(frame: &[f64], frame_len: usize) -> Result<Vec<f64>> {
    check_dim(frame_len, frame.len())?;
    if !is_power_of_two(frame_len) || frame_len < 2 {
        return Err(invalid("frame length must be a power of two"));
    }
    let window = hamming(frame_len);
    stft_with_window(frame, &window)
}

fn stft_with_window(frame: &[f64], window: &[f64]) -> Result<Vec<f64>> {
    let windowed: Vec<f64> = frame.iter().zip(window).map(|(x, w)| x * w).collect();
    let spec = fft::rfft(&windowed)?;
    let last = spec.len() - 1;
    Ok(spec
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let m = c.norm();
            if k == 0 || k == last {
                m * core::f64::consts::FRAC_1_SQRT_2
            } else {
                m
            }
        })
        .collect())
}

pub const LOG_FLOOR: f64 = 1e-8;

/// Exactly-`S`-row feature map: `[ln(|X_k| + 1e-8) for k in 0..=F/2, zcr, kurtosis]`.
pub fn extract_feature_map(clip: &AudioClip, spec: FrameSpec) -> Result<FeatureMap> {
    if clip.is_empty() {
        return Err(invalid("cannot extract features from an empty clip"));
    }
    let f = spec.frame_len;
    if !is_power_of_two(f) {
        return Err(invalid("frame length must be a power of two"));
    }
    let mut padded;
    let samples: &[f64] = if clip.len() < f {
        padded = clip.samples.clone();
        padded.resize(f, 0.0);
        &padded
    } else {
        &clip.samples
    };
    let offsets = plan_frames(samples.len(), f, spec.num_frames)?;
    let window = hamming(f);
    let d = spec.feature_dim();
    let mut values = Vec::with_capacity(spec.num_frames * d);
    for &off in &offsets {
        let frame = &samples[off..off + f];
        let mags = stft_with_window(frame, &window)?;
        values.extend(mags.iter().map(|m| (m + LOG_FLOOR).ln() as f32));
        values.push(zcr(frame)? as f32);
        values.push(kurtosis(frame)?.value as f32);
    }
    FeatureMap::new(spec.num_frames, d, values)
}

/// MFCC front end parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub pre_emphasis: f64,
    /// Subtract the per-clip cepstral mean.
    pub mean_subtraction: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 24,
            n_coeffs: 20,
            pre_emphasis: 0.97,
            mean_subtraction: true,
        }
    }
}

impl MfccConfig {
    pub fn window_len(&self, rate: u32) -> usize {
        (self.window_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self, rate: u32) -> usize {
        (self.hop_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(invalid("n_coeffs must be in 1..=n_mels"));
        }
        if !(self.window_ms > 0.0) || !(self.hop_ms > 0.0) {
            return Err(invalid("window and hop must be positive"));
        }
        Ok(())
    }

    /// Number of frames produced for `num_samples` input samples.
    pub fn frame_count(&self, num_samples: usize, rate: u32) -> usize {
        let win = self.window_len(rate);
        if num_samples < win {
            0
        } else {
            (num_samples - win) / self.hop_len(rate).max(1) + 1
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters (0 Hz to Nyquist) sampled at the FFT bin centres.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, rate: u32) -> Vec<Vec<f64>> {
    let nyquist = rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * rate as f64 / n_fft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

pub const MFCC_LOG_FLOOR: f64 = 1e-10;

/// `T × n_coeffs` MFCC matrix (c0 included).
pub fn mfcc(clip: &AudioClip, config: &MfccConfig) -> Result<Matrix> {
    config.validate()?;
    let rate = clip.sample_rate;
    let win = config.window_len(rate);
    let hop = config.hop_len(rate).max(1);
    if win < 2 || clip.len() < win {
        return Err(Error::TooShort { needed: win, have: clip.len() });
    }
    let n_fft = win.next_power_of_two();
    let x = &clip.samples;
    let emphasized: Vec<f64> = (0..x.len())
        .map(|i| if i == 0 { x[0] } else { x[i] - config.pre_emphasis * x[i - 1] })
        .collect();
    let window = hamming(win);
    let filters = mel_filterbank(config.n_mels, n_fft, rate);
    let n_frames = config.frame_count(x.len(), rate);
    let m = config.n_mels;
    let dct_scale0 = (1.0 / m as f64).sqrt();
    let dct_scale = (2.0 / m as f64).sqrt();
    let dct: Vec<Vec<f64>> = (0..config.n_coeffs)
        .map(|k| {
            (0..m)
                .map(|j| {
                    let s = if k == 0 { dct_scale0 } else { dct_scale };
                    s * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos()
                })
                .collect()
        })
        .collect();

    let mut out = Matrix::zeros(n_frames, config.n_coeffs);
    let mut buf = vec![0.0; n_fft];
    let mut log_mel = vec![0.0; m];
    for t in 0..n_frames {
        let start = t * hop;
        buf.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..win {
            buf[i] = emphasized[start + i] * window[i];
        }
        let power: Vec<f64> = fft::rfft(&buf)?.iter().map(|c| c.norm_sqr()).collect();
        for (lm, filt) in log_mel.iter_mut().zip(&filters) {
            let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            *lm = e.max(MFCC_LOG_FLOOR).ln();
        }
        let row = out.row_mut(t);
        for (c, basis) in row.iter_mut().zip(&dct) {
            *c = basis.iter().zip(&log_mel).map(|(b, e)| b * e).sum();
        }
    }
    if config.mean_subtraction && n_frames > 0 {
        let d = config.n_coeffs;
        let mut mean = vec![0.0; d];
        for r in out.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n_frames as f64);
        for t in 0..n_frames {
            for (v, m) in out.row_mut(t).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn plan_frames_examples() {
        let o = plan_frames(16_000, 1024, 100).unwrap();
        assert_eq!(o.len(), 100);
        assert_eq!(o[0], 0);
        assert_eq!(o[99], 14_976);
        assert_eq!(o[1], 151); // 14976/99 ≈ 151.27
        assert_eq!(plan_frames(1024, 1024, 7).unwrap(), vec![0; 7]);
        assert_eq!(plan_frames(2048, 1024, 3).unwrap(), vec![0, 512, 1024]);
        assert!(plan_frames(100, 1, 3).is_err());
        assert!(plan_frames(100, 4, 1).is_err());
    }

    #[test]
    fn zcr_cases() {
        assert_eq!(zcr(&[0.3; 16]).unwrap(), 0.0);
        let alt: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(zcr(&alt).unwrap(), 1.0);
        let mut r = rng::seeded(3);
        let coin: Vec<f64> = (0..4096).map(|_| if rng::uniform(&mut r) < 0.5 { 1.0 } else { -1.0 }).collect();
        assert!((zcr(&coin).unwrap() - 0.5).abs() < 0.05);
        assert!(zcr(&[1.0]).is_err());
        // zeros count as positive
        assert_eq!(zcr(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn kurtosis_cases() {
        let n = 1000;
        let sine: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect();
        assert!((kurtosis(&sine).unwrap().value - 1.5).abs() < 0.01);
        let mut r = rng::seeded(5);
        let gauss: Vec<f64> = (0..8192).map(|_| rng::normal(&mut r)).collect();
        assert!((kurtosis(&gauss).unwrap().value - 3.0).abs() < 0.15);
        let flat = kurtosis(&[0.2; 32]).unwrap();
        assert_eq!(flat, Kurtosis { value: 0.0, degenerate: true });
        assert!(kurtosis(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn stft_cases() {
        let ones = stft_magnitude(&[1.0; 256], 256).unwrap();
        assert!(ones[2..].iter().all(|&m| m < 0.01 * ones[0]));
        let k = 17;
        let tone: Vec<f64> = (0..256).map(|i| (2.0 * PI * (k * i) as f64 / 256.0).cos()).collect();
        let mags = stft_magnitude(&tone, 256).unwrap();
        let arg = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert_eq!(arg, k);
        assert!(stft_magnitude(&[0.0; 64], 64).unwrap().iter().all(|&m| m == 0.0));
        assert!(stft_magnitude(&[0.0; 64], 128).is_err());
        assert!(stft_magnitude(&[0.0; 96], 96).is_err());
    }

    #[test]
    fn stft_parseval() {
        let mut r = rng::seeded(9);
        for &f in &[512usize, 1024] {
            let x: Vec<f64> = (0..f).map(|_| rng::normal(&mut r)).collect();
            let w = hamming(f);
            let energy: f64 = x.iter().zip(&w).map(|(a, b)| (a * b) * (a * b)).sum();
            let spec: f64 = stft_magnitude(&x, f).unwrap().iter().map(|m| m * m).sum();
            assert!((spec - (f / 2) as f64 * energy).abs() / spec < 1e-6);
        }
    }

    #[test]
    fn feature_map_shape_and_silence() {
        let mut r = rng::seeded(1);
        let clip = AudioClip::new((0..16_000).map(|_| 0.1 * rng::normal(&mut r)).collect(), 16_000).unwrap();
        let spec = FrameSpec::new(1024, 100).unwrap();
        let m = extract_feature_map(&clip, spec).unwrap();
        assert_eq!(m.shape(), (100, 515));
        assert_eq!(m, extract_feature_map(&clip, spec).unwrap());
        assert!(m.values.iter().all(|v| v.is_finite()));

        let zero = AudioClip::silence(16_000, 16_000);
        let z = extract_feature_map(&zero, spec).unwrap();
        let floor = (1e-8f64).ln() as f32;
        for row in 0..100 {
            assert!(z.row(row)[..513].iter().all(|&v| v == floor));
            assert_eq!(z.get(row, 513), 0.0);
            assert_eq!(z.get(row, 514), 0.0);
        }

        let short = AudioClip::new(vec![0.5; 100], 16_000).unwrap();
        assert_eq!(extract_feature_map(&short, spec).unwrap().shape(), (100, 515));
    }

    #[test]
    fn mfcc_frame_count_and_silence() {
        let cfg = MfccConfig::default();
        let clip = AudioClip::silence(1600, 16_000);
        let m = mfcc(&clip, &cfg).unwrap();
        assert_eq!((m.rows(), m.cols()), (8, 20));
        assert!(m.as_slice().iter().all(|&v| v.abs() < 1e-12));
        assert!(mfcc(&AudioClip::silence(100, 16_000), &cfg).is_err());
    }

    /// Mean raw c1 over a 5-second clip, cepstral mean left in.
    fn mean_c1(samples: &[f64], pre_emphasis: f64) -> f64 {
        let cfg = MfccConfig { mean_subtraction: false, pre_emphasis, ..MfccConfig::default() };
        let m = mfcc(&AudioClip::new(samples.to_vec(), 16_000).unwrap(), &cfg).unwrap();
        m.row_iter().map(|r| r[1]).sum::<f64>() / m.rows() as f64
    }

    #[test]
    fn mfcc_c1_tracks_spectral_tilt() {
        let n = 80_000;
        let mut r = rng::seeded(21);
        let white: Vec<f64> = (0..n).map(|_| 0.1 * rng::normal(&mut r)).collect();
        // pink noise via the Voss-McCartney style sum of held random rows
        let mut rows = [0.0f64; 16];
        let mut pink = Vec::with_capacity(n);
        for i in 0..n {
            let k = (i + 1).trailing_zeros() as usize;
            if k < rows.len() {
                rows[k] = rng::normal(&mut r);
            }
            pink.push(0.02 * rows.iter().sum::<f64>());
        }
        // flat spectrum: c1 < 0 (wider high mel bands), 1/f: c1 > 0
        let (cw, cp) = (mean_c1(&white, 0.0), mean_c1(&pink, 0.0));
        assert!(cw < 0.0 && cp > 0.0, "{cw} {cp}");
        // pre-emphasis tilts both upwards but keeps the ordering
        assert!(mean_c1(&white, 0.97) < mean_c1(&pink, 0.97));
    }
}
