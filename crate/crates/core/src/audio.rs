//! Mono audio clips and the sample-level operations the corpus builders
//! need: resampling, duration normalisation, SNR estimation and
//! SNR-targeted noise mixing.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Mono samples in `[-1, 1]` at an integer sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power `Σx²/n` (0 for an empty clip).
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Copy with every sample clipped to `[-1, 1]`.
    pub fn clamped(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

pub const RESAMPLE_TAPS: usize = 64;
pub const KAISER_BETA: f64 = 8.0;
/// Passband edge as a fraction of the lower of the two Nyquist rates.
const RESAMPLE_ROLLOFF: f64 = 0.92;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    let mut k = 1.0;
    while term > 1e-16 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc (β = 8).
pub fn resample(clip: &AudioClip, target_hz: u32) -> Result<AudioClip> {
    if target_hz == 0 {
        return Err(invalid("target sample rate must be positive"));
    }
    if target_hz == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = clip.sample_rate as f64;
    let dst = target_hz as f64;
    let step = src / dst;
    let out_len = (clip.len() as f64 * dst / src).round() as usize;
    let cutoff = RESAMPLE_ROLLOFF * (dst / src).min(1.0);
    let half = (RESAMPLE_TAPS / 2) as isize;
    let i0_beta = bessel_i0(KAISER_BETA);
    let x = &clip.samples;
    let n_in = x.len() as isize;

    let mut out = Vec::with_capacity(out_len);
    let mut weights = [0.0f64; RESAMPLE_TAPS];
    for n in 0..out_len {
        let t = n as f64 * step;
        let base = t.floor() as isize;
        let mut wsum = 0.0;
        for (k, w) in weights.iter_mut().enumerate() {
            let i = base - half + 1 + k as isize;
            let d = t - i as f64;
            let r = d / half as f64;
            let win = if r.abs() >= 1.0 {
                0.0
            } else {
                bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
            };
            *w = cutoff * sinc(cutoff * d) * win;
            wsum += *w;
        }
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let i = base - half + 1 + k as isize;
            if (0..n_in).contains(&i) {
                acc += w * x[i as usize];
            }
        }
        let y = if wsum.abs() > 1e-12 { acc / wsum } else { acc };
        out.push(y.clamp(-1.0, 1.0));
    }
    Ok(AudioClip { samples: out, sample_rate: target_hz })
}

/// Trims the tail or zero-pads it to exactly `round(target_sec · rate)` samples.
pub fn normalize_duration(clip: &AudioClip, target_sec: f64) -> Result<AudioClip> {
    if !(target_sec > 0.0) || !target_sec.is_finite() {
        return Err(invalid("target duration must be positive"));
    }
    let n = (target_sec * clip.sample_rate as f64).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(n, 0.0);
    Ok(AudioClip { samples, sample_rate: clip.sample_rate })
}

pub const SNR_FRAME_SEC: f64 = 0.032;
pub const POWER_FLOOR: f64 = 1e-12;

/// Decile-based SNR estimate in dB over non-overlapping 32 ms frames:
/// mean energy of the loudest tenth of frames over the quietest tenth.
pub fn estimate_snr(clip: &AudioClip) -> Result<f64> {
    let frame = ((SNR_FRAME_SEC * clip.sample_rate as f64).round() as usize).max(1);
    let n_frames = clip.len() / frame;
    if n_frames < 10 {
        return Err(Error::TooShort { needed: 10 * frame, have: clip.len() });
    }
    let mut energies: Vec<f64> = clip
        .samples
        .chunks_exact(frame)
        .map(mean_power)
        .collect();
    energies.sort_by(f64::total_cmp);
    let k = n_frames / 10;
    let noise = (energies[..k].iter().sum::<f64>() / k as f64).max(POWER_FLOOR);
    let signal = (energies[n_frames - k..].iter().sum::<f64>() / k as f64).max(POWER_FLOOR);
    Ok(10.0 * (signal / noise).log10())
}

/// Noise excerpt of `len` samples starting at a seeded offset, looping
/// over the noise clip when it is shorter than requested.
pub fn noise_excerpt(noise: &AudioClip, len: usize, seed: u64) -> Result<Vec<f64>> {
    if noise.is_empty() {
        return Err(Error::SilentNoise);
    }
    let mut r = rng::seeded(seed);
    let offset = rng::below(&mut r, noise.len());
    Ok((0..len).map(|i| noise.samples[(offset + i) % noise.len()]).collect())
}

/// The two addends of an SNR-targeted mix, after any peak normalisation.
#[derive(Debug, Clone)]
pub struct MixComponents {
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
    /// Gain applied to the raw noise excerpt before peak normalisation.
    pub noise_gain: f64,
    /// Common scale applied to both addends (1.0 unless the sum would clip).
    pub peak_scale: f64,
}

pub fn mix_components(
    signal: &AudioClip,
    noise: &AudioClip,
    target_snr_db: f64,
    seed: u64,
) -> Result<MixComponents> {
    if signal.sample_rate != noise.sample_rate {
        return Err(Error::RateMismatch(signal.sample_rate, noise.sample_rate));
    }
    if !target_snr_db.is_finite() {
        return Err(invalid("target SNR must be finite"));
    }
    if noise.power() <= POWER_FLOOR {
        return Err(Error::SilentNoise);
    }
    let excerpt = noise_excerpt(noise, signal.len(), seed)?;
    let p_n = mean_power(&excerpt);
    if p_n <= POWER_FLOOR {
        return Err(Error::SilentNoise);
    }
    let p_s = signal.power();
    let gain = (p_s / (p_n * 10f64.powf(target_snr_db / 10.0))).sqrt();
    let peak = signal
        .samples
        .iter()
        .zip(&excerpt)
        .fold(0.0f64, |m, (s, n)| m.max((s + gain * n).abs()));
    let peak_scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    Ok(MixComponents {
        signal: signal.samples.iter().map(|s| s * peak_scale).collect(),
        noise: excerpt.iter().map(|n| n * gain * peak_scale).collect(),
        noise_gain: gain,
        peak_scale,
    })
}

/// `signal + g·noise` with `g` chosen so the component power ratio equals
/// `target_snr_db`; the sum is peak-normalised only if it would clip.
pub fn mix_at_snr(
    signal: &AudioClip,
    noise: &AudioClip,
    target_snr_db: f64,
    seed: u64,
) -> Result<AudioClip> {
    let parts = mix_components(signal, noise, target_snr_db, seed)?;
    let samples = parts
        .signal
        .iter()
        .zip(&parts.noise)
        .map(|(s, n)| (s + n).clamp(-1.0, 1.0))
        .collect();
    Ok(AudioClip { samples, sample_rate: signal.sample_rate })
}

pub fn concatenate(clips: &[AudioClip]) -> Result<AudioClip> {
    let first = clips.first().ok_or_else(|| invalid("nothing to concatenate"))?;
    let rate = first.sample_rate;
    let mut samples = Vec::with_capacity(clips.iter().map(AudioClip::len).sum());
    for c in clips {
        if c.sample_rate != rate {
            return Err(Error::RateMismatch(rate, c.sample_rate));
        }
        samples.extend_from_slice(&c.samples);
    }
    Ok(AudioClip { samples, sample_rate: rate })
}
