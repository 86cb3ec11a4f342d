//! RIFF/WAVE reading (8/16/24-bit integer or 32-bit float, mono or
//! stereo) and 16-bit PCM writing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use wakecough_core::audio::AudioClip;

use crate::error::{Error, Result};

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(BufReader::new(file)).map_err(|msg| Error::format(path, msg))
}

/// Decodes a WAV stream; stereo is averaged to mono.
pub fn decode<R: Read>(reader: R) -> std::result::Result<AudioClip, String> {
    let mut wav = WavReader::new(reader).map_err(|e| format!("malformed WAV: {e}"))?;
    let spec = wav.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(format!("unsupported channel count {channels}"));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24)) => {
            let scale = (1u32 << (bits - 1)) as f64;
            wav.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("bad sample data: {e}"))?
        }
        (SampleFormat::Float, 32) => wav
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("bad sample data: {e}"))?,
        (fmt, bits) => return Err(format!("unsupported codec: {bits}-bit {fmt:?}")),
    };
    if interleaved.is_empty() {
        return Err("empty data chunk".into());
    }
    let samples: Vec<f64> = interleaved
        .chunks(channels)
        .map(|f| (f.iter().sum::<f64>() / channels as f64).clamp(-1.0, 1.0))
        .collect();
    AudioClip::new(samples, spec.sample_rate).map_err(|e| e.to_string())
}

/// Writes 16-bit mono PCM; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec = WavSpec { channels: 1, sample_rate: clip.sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = WavWriter::new(BufWriter::new(file), spec).map_err(|e| Error::format(path, e))?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(|e| Error::format(path, e))?;
    }
    w.finalize().map_err(|e| Error::format(path, e))
}

/// Duration from the header alone.
pub fn probe_duration(path: &Path) -> Result<f64> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let wav = WavReader::new(BufReader::new(file)).map_err(|e| Error::format(path, e))?;
    let spec = wav.spec();
    if wav.duration() == 0 {
        return Err(Error::format(path, "empty data chunk"));
    }
    Ok(wav.duration() as f64 / spec.sample_rate as f64)
}
