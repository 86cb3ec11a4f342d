//! Synthetic signals for desk-scale fixtures: resonant noise bursts that
//! stand in for coughs, multi-tone "words", and background noise.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::audio::AudioClip;
use crate::error::{invalid, Result};
use crate::rng;

/// Spectral signature of a synthetic cougher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoughSignature {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

/// Envelope and background settings shared by all bursts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstShape {
    pub duration_sec: f64,
    pub attack_sec: f64,
    pub decay_sec: f64,
    /// Background noise level relative to the burst peak.
    pub background_db: f64,
}

impl Default for BurstShape {
    fn default() -> Self {
        Self { duration_sec: 0.8, attack_sec: 0.01, decay_sec: 1.0, background_db: -40.0 }
    }
}

/// Rejects signatures that cannot be realised at `rate` and pairs that
/// are identical.
pub fn validate_signatures(sigs: &[CoughSignature], rate: u32) -> Result<()> {
    let nyquist = rate as f64 / 2.0;
    for (i, s) in sigs.iter().enumerate() {
        if !(s.center_hz > 0.0 && s.center_hz < nyquist && s.bandwidth_hz > 0.0) {
            return Err(invalid(alloc::format!("signature {i} is outside (0, {nyquist}) Hz")));
        }
        for (j, t) in sigs.iter().enumerate().skip(i + 1) {
            if s == t {
                return Err(invalid(alloc::format!("signatures {i} and {j} are identical")));
            }
        }
    }
    Ok(())
}

/// Second-order band-pass with unit peak gain.
#[derive(Debug, Clone, Copy)]
pub struct Resonator {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Resonator {
    pub fn new(center_hz: f64, bandwidth_hz: f64, rate: u32) -> Self {
        let w0 = 2.0 * PI * center_hz / rate as f64;
        let q = center_hz / bandwidth_hz;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self { b0: alpha / a0, b2: -alpha / a0, a1: -2.0 * w0.cos() / a0, a2: (1.0 - alpha) / a0 }
    }

    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = self.b0 * v + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
                x2 = x1;
                x1 = v;
                y2 = y1;
                y1 = y;
                y
            })
            .collect()
    }
}

fn white(n: usize, r: &mut rng::SeededRng) -> Vec<f64> {
    (0..n).map(|_| rng::normal(r)).collect()
}

fn scale_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// One burst: resonator-filtered noise under an attack/exponential-decay
/// envelope, over a faint white background. Peak amplitude is drawn from
/// [0.3, 0.9].
pub fn cough_burst(sig: &CoughSignature, shape: &BurstShape, rate: u32, seed: u64) -> Result<AudioClip> {
    validate_signatures(core::slice::from_ref(sig), rate)?;
    if !(shape.duration_sec > 0.0 && shape.decay_sec > 0.0 && shape.attack_sec >= 0.0) {
        return Err(invalid("burst duration and decay must be positive"));
    }
    let n = (shape.duration_sec * rate as f64).round() as usize;
    let mut r = rng::seeded(seed);
    let onset = (0.02 * rng::uniform(&mut r) * rate as f64) as usize;
    let mut body = Resonator::new(sig.center_hz, sig.bandwidth_hz, rate).filter(&white(n, &mut r));
    let attack = (shape.attack_sec * rate as f64).max(1.0);
    for (i, v) in body.iter_mut().enumerate() {
        let t = i as f64 - onset as f64;
        let env = if t < 0.0 {
            0.0
        } else if t < attack {
            t / attack
        } else {
            (-(t - attack) / (shape.decay_sec * rate as f64)).exp()
        };
        *v *= env;
    }
    let peak = 0.3 + 0.6 * rng::uniform(&mut r);
    scale_peak(&mut body, peak);
    let bg = peak * 10f64.powf(shape.background_db / 20.0);
    let floor = white(n, &mut r);
    for (v, b) in body.iter_mut().zip(&floor) {
        *v = (*v + bg * b.clamp(-3.0, 3.0) / 3.0).clamp(-1.0, 1.0);
    }
    AudioClip::new(body, rate)
}

/// A "word" made of consecutive tone segments `(frequency Hz, seconds)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneWord {
    pub segments: Vec<(f64, f64)>,
}

impl ToneWord {
    pub fn duration_sec(&self) -> f64 {
        self.segments.iter().map(|s| s.1).sum()
    }
}

/// Renders `word` inside a clip of `clip_sec` seconds with a random start,
/// ±3 % pitch jitter, a second harmonic and 5 ms ramps at segment edges.
pub fn tone_word(word: &ToneWord, clip_sec: f64, rate: u32, seed: u64) -> Result<AudioClip> {
    let total = word.duration_sec();
    if word.segments.is_empty() || total > clip_sec || word.segments.iter().any(|s| !(s.0 > 0.0 && s.1 > 0.0)) {
        return Err(invalid("tone word must have positive segments that fit the clip"));
    }
    let n = (clip_sec * rate as f64).round() as usize;
    let mut r = rng::seeded(seed);
    let slack = clip_sec - total;
    let mut pos = (rng::uniform(&mut r) * slack * rate as f64) as usize;
    let jitter = 1.0 + 0.06 * (rng::uniform(&mut r) - 0.5);
    let amp = 0.2 + 0.5 * rng::uniform(&mut r);
    let ramp = (0.005 * rate as f64).max(1.0);
    let mut out = vec![0.0; n];
    let mut phase = 0.0;
    for &(freq, dur) in &word.segments {
        let len = (dur * rate as f64).round() as usize;
        let step = 2.0 * PI * freq * jitter / rate as f64;
        for i in 0..len {
            if pos + i >= n {
                break;
            }
            let edge = (i as f64 / ramp).min((len - i) as f64 / ramp).min(1.0);
            out[pos + i] = amp * edge * (phase.sin() + 0.3 * (2.0 * phase).sin()) / 1.3;
            phase += step;
        }
        pos += len;
    }
    AudioClip::new(out, rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseColor {
    White,
    Pink,
    Brown,
}

/// Background noise with peak 0.5.
pub fn noise(color: NoiseColor, duration_sec: f64, rate: u32, seed: u64) -> Result<AudioClip> {
    if !(duration_sec > 0.0) {
        return Err(invalid("noise duration must be positive"));
    }
    let n = (duration_sec * rate as f64).round() as usize;
    let mut r = rng::seeded(seed);
    let w = white(n, &mut r);
    let mut x = match color {
        NoiseColor::White => w,
        NoiseColor::Pink => {
            // Kellet's economical pink filter
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            w.iter()
                .map(|&v| {
                    b0 = 0.99765 * b0 + v * 0.0990460;
                    b1 = 0.96300 * b1 + v * 0.2965164;
                    b2 = 0.57000 * b2 + v * 1.0526913;
                    b0 + b1 + b2 + v * 0.1848
                })
                .collect()
        }
        NoiseColor::Brown => {
            let mut acc = 0.0;
            w.iter()
                .map(|&v| {
                    acc = 0.995 * acc + v;
                    acc
                })
                .collect()
        }
    };
    let mean = x.iter().sum::<f64>() / n.max(1) as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    scale_peak(&mut x, 0.5);
    AudioClip::new(x, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::rfft;

    fn peak_bin(x: &[f64], n: usize) -> usize {
        let spec = rfft(&x[..n]).unwrap();
        let mags: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
        crate::classifiers::argmax(&mags)
    }

    #[test]
    fn burst_energy_sits_at_the_resonance() {
        let sig = CoughSignature { center_hz: 1500.0, bandwidth_hz: 200.0 };
        let clip = cough_burst(&sig, &BurstShape::default(), 16000, 4).unwrap();
        let bin = peak_bin(&clip.samples, 4096);
        let hz = bin as f64 * 16000.0 / 4096.0;
        assert!((hz - 1500.0).abs() < 200.0, "{hz}");
        assert_eq!(clip.len(), 12800);
        assert_eq!(clip, cough_burst(&sig, &BurstShape::default(), 16000, 4).unwrap());
    }

    #[test]
    fn identical_signatures_are_refused() {
        let s = CoughSignature { center_hz: 800.0, bandwidth_hz: 100.0 };
        assert!(validate_signatures(&[s, s], 16000).is_err());
        let t = CoughSignature { center_hz: 9000.0, bandwidth_hz: 100.0 };
        assert!(validate_signatures(&[t], 16000).is_err());
    }

    #[test]
    fn tone_word_fits_clip() {
        let w = ToneWord { segments: vec![(600.0, 0.2), (1800.0, 0.2)] };
        let c = tone_word(&w, 1.0, 16000, 1).unwrap();
        assert_eq!(c.len(), 16000);
        assert!(c.peak() <= 1.0 && c.peak() > 0.1);
        assert!(tone_word(&w, 0.3, 16000, 1).is_err());
    }

    #[test]
    fn noise_is_centred() {
        for color in [NoiseColor::White, NoiseColor::Pink, NoiseColor::Brown] {
            let c = noise(color, 0.5, 16000, 2).unwrap();
            assert!((c.peak() - 0.5).abs() < 1e-12);
            assert!(c.samples.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}
