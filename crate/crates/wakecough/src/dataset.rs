//! Corpus assembly: speech-commands style spotting sets with an injected
//! cough class, per-subject cough concatenation, and synthetic fixtures.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wakecough_core::audio::{concatenate, mix_at_snr, normalize_duration, resample, AudioClip, POWER_FLOOR};
use wakecough_core::rng;
use wakecough_core::synth::{self, BurstShape, CoughSignature, NoiseColor, ToneWord};

use crate::error::{invalid, Error, Result};
use crate::manifest::{Manifest, ManifestEntry, COUGH_LABEL};
use crate::wav::{read_wav, write_wav};

pub const SAMPLE_RATE: u32 = 16_000;
pub const EVENT_SEC: f64 = 1.0;
pub const SNR_RANGE_DB: (f64, f64) = (34.0, 73.0);
pub const MAX_COUGHS: usize = 3795;
pub const NOISE_LABEL: &str = "_background_noise_";
/// The ten commands of the classic twelve-class keyword task.
pub const SC10_COMMANDS: [&str; 10] = ["down", "go", "left", "no", "off", "on", "right", "stop", "up", "yes"];

/// Reads an entry and brings it to the working sample rate.
pub fn load_entry(manifest: &Manifest, entry: &ManifestEntry) -> Result<AudioClip> {
    let clip = read_wav(&manifest.path_of(entry))?;
    if clip.sample_rate == SAMPLE_RATE {
        Ok(clip)
    } else {
        Ok(resample(&clip, SAMPLE_RATE)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Ten command classes plus cough.
    Sc11,
    /// Thirty-five command classes plus cough.
    Sc36,
    /// Every command class present plus cough.
    All,
}

impl Variant {
    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc-11" | "sc11" => Some(Variant::Sc11),
            "sc-36" | "sc36" => Some(Variant::Sc36),
            "all" => Some(Variant::All),
            _ => None,
        }
    }

    fn commands(self) -> Option<usize> {
        match self {
            Variant::Sc11 => Some(10),
            Variant::Sc36 => Some(35),
            Variant::All => None,
        }
    }
}

/// Command classes used by `variant`: the classic ten when all are present
/// for SC-11, otherwise a sorted prefix.
pub fn select_commands(available: &[String], variant: Variant) -> Result<Vec<String>> {
    let pool: Vec<String> =
        available.iter().filter(|l| l.as_str() != COUGH_LABEL && l.as_str() != NOISE_LABEL).cloned().collect();
    let Some(need) = variant.commands() else {
        if pool.is_empty() {
            return Err(invalid("command manifest has no classes"));
        }
        return Ok(pool);
    };
    if pool.len() < need {
        return Err(invalid(format!("{variant:?} needs {need} command classes, manifest has {}", pool.len())));
    }
    if need == 10 && SC10_COMMANDS.iter().all(|c| pool.iter().any(|p| p == c)) {
        return Ok(SC10_COMMANDS.iter().map(|s| s.to_string()).collect());
    }
    Ok(pool.into_iter().take(need).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScOptions {
    pub variant: Variant,
    pub seed: u64,
    pub max_coughs: usize,
    /// Mix noise into the cough events only.
    pub coughs_only: bool,
}

impl Default for ScOptions {
    fn default() -> Self {
        Self { variant: Variant::Sc11, seed: 0, max_coughs: MAX_COUGHS, coughs_only: false }
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Builds the spotting corpus under `out_dir` and returns its manifest
/// (paths relative to `out_dir`). Every event is one second at 16 kHz.
pub fn build_sc_dataset(
    commands: &Manifest,
    coughs: &Manifest,
    noises: &Manifest,
    opts: &ScOptions,
    out_dir: &Path,
) -> Result<Manifest> {
    let classes = select_commands(&commands.labels(), opts.variant)?;
    if coughs.entries.is_empty() {
        return Err(invalid("cough manifest is empty"));
    }
    if noises.entries.is_empty() {
        return Err(invalid("noise manifest is empty"));
    }
    let noise_clips: Vec<AudioClip> = noises
        .entries
        .par_iter()
        .map(|e| load_entry(noises, e))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|c| c.power() > POWER_FLOOR)
        .collect();
    if noise_clips.is_empty() {
        return Err(Error::Core(wakecough_core::Error::SilentNoise));
    }

    let mut events: Vec<(&Manifest, &ManifestEntry, bool)> = Vec::new();
    for e in commands.entries.iter().filter(|e| classes.contains(&e.label)) {
        events.push((commands, e, false));
    }
    let mut picked: Vec<usize> = (0..coughs.entries.len()).collect();
    if picked.len() > opts.max_coughs {
        let mut r = rng::derive(opts.seed, 7);
        rng::shuffle(&mut r, &mut picked);
        picked.truncate(opts.max_coughs);
        picked.sort_unstable();
    }
    for &i in &picked {
        events.push((coughs, &coughs.entries[i], true));
    }

    let entries = events
        .par_iter()
        .enumerate()
        .map(|(i, &(src, entry, is_cough))| {
            let seed = rng::mix(opts.seed, &[i as u64]);
            let mut r = rng::seeded(seed);
            let noise = &noise_clips[rng::below(&mut r, noise_clips.len())];
            let snr = SNR_RANGE_DB.0 + (SNR_RANGE_DB.1 - SNR_RANGE_DB.0) * rng::uniform(&mut r);
            let clip = normalize_duration(&load_entry(src, entry)?, EVENT_SEC)?;
            let (clip, snr_db) = if is_cough || !opts.coughs_only {
                (mix_at_snr(&clip, noise, snr, rng::mix(seed, &[1]))?, Some(snr))
            } else {
                (clip, None)
            };
            let label = if is_cough { COUGH_LABEL.to_string() } else { entry.label.clone() };
            let rel = format!("{label}/{}.wav", sanitize(&entry.id));
            write_wav(&out_dir.join(&rel), &clip)?;
            Ok(ManifestEntry {
                id: format!("{label}/{}", sanitize(&entry.id)),
                path: rel,
                label,
                subject: entry.subject.clone(),
                duration_sec: EVENT_SEC,
                snr_db,
                split: "all".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = Manifest::new(entries)?;
    m.base = out_dir.to_path_buf();
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CougherTask {
    pub n: usize,
    pub t_sec: f64,
    /// Explicit subjects; otherwise the first `n` eligible ids in sorted
    /// order, or a seeded random draw when `random` is set.
    pub subjects: Option<Vec<String>>,
    pub random: bool,
    pub seed: u64,
}

impl CougherTask {
    pub fn new(n: usize, t_sec: f64) -> Self {
        Self { n, t_sec, subjects: None, random: false, seed: 0 }
    }
}

/// Picks subjects with at least `t` seconds of audio.
pub fn select_subjects(coughs: &Manifest, task: &CougherTask) -> Result<Vec<String>> {
    if task.n < 2 || !(task.t_sec > 0.0) {
        return Err(invalid("cougher task needs N >= 2 and t > 0"));
    }
    let totals = coughs.subject_durations();
    let eligible: Vec<String> =
        totals.iter().filter(|(_, &d)| d + 1e-9 >= task.t_sec).map(|(s, _)| s.clone()).collect();
    if let Some(list) = &task.subjects {
        if list.len() != task.n {
            return Err(invalid(format!("{} subjects listed for N={}", list.len(), task.n)));
        }
        for s in list {
            if !eligible.contains(s) {
                let have = totals.get(s).copied().unwrap_or(0.0);
                return Err(invalid(format!("subject {s:?} has {have:.2} s of audio, t={} s requested", task.t_sec)));
            }
        }
        return Ok(list.clone());
    }
    if eligible.len() < task.n {
        return Err(invalid(format!(
            "N={} requested but only {} of {} subjects have {} s of audio",
            task.n,
            eligible.len(),
            totals.len(),
            task.t_sec
        )));
    }
    if !task.random {
        return Ok(eligible[..task.n].to_vec());
    }
    let mut pick = eligible;
    rng::shuffle(&mut rng::derive(task.seed, 5), &mut pick);
    pick.truncate(task.n);
    pick.sort();
    Ok(pick)
}

/// Per-subject clips of exactly `t` seconds: the subject's recordings
/// concatenated in manifest order and cut at the sample.
pub fn build_cougher_task(coughs: &Manifest, task: &CougherTask) -> Result<Vec<(String, AudioClip)>> {
    let subjects = select_subjects(coughs, task)?;
    let need = (task.t_sec * SAMPLE_RATE as f64).round() as usize;
    subjects
        .par_iter()
        .map(|s| {
            let mut parts = Vec::new();
            let mut have = 0;
            for e in coughs.entries.iter().filter(|e| e.subject.as_deref() == Some(s.as_str())) {
                if have >= need {
                    break;
                }
                let clip = load_entry(coughs, e)?;
                have += clip.len();
                parts.push(clip);
            }
            if have < need {
                return Err(invalid(format!("subject {s:?} has {have} samples of audio, {need} needed")));
            }
            let mut clip = concatenate(&parts)?;
            clip.samples.truncate(need);
            Ok((s.clone(), clip))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCougher {
    pub id: String,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureWord {
    pub label: String,
    /// `(frequency Hz, seconds)` segments.
    pub segments: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureNoise {
    pub id: String,
    /// `white`, `pink` or `brown`.
    pub color: String,
    pub duration_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureSpec {
    pub seed: u64,
    pub coughers: Vec<FixtureCougher>,
    pub bursts_per_cougher: usize,
    pub burst_sec: f64,
    pub attack_sec: f64,
    pub decay_sec: f64,
    pub background_db: f64,
    pub words: Vec<FixtureWord>,
    pub events_per_word: usize,
    pub noises: Vec<FixtureNoise>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let b = BurstShape::default();
        let cougher = |i: usize, f: f64, bw: f64| FixtureCougher { id: format!("c{i}"), center_hz: f, bandwidth_hz: bw };
        let word = |l: &str, segs: &[(f64, f64)]| FixtureWord { label: l.into(), segments: segs.to_vec() };
        let noise = |c: &str| FixtureNoise { id: c.into(), color: c.into(), duration_sec: 10.0 };
        Self {
            seed: 0,
            coughers: vec![
                cougher(0, 500.0, 120.0),
                cougher(1, 900.0, 180.0),
                cougher(2, 1500.0, 250.0),
                cougher(3, 2400.0, 350.0),
                cougher(4, 3600.0, 500.0),
            ],
            bursts_per_cougher: 40,
            burst_sec: b.duration_sec,
            attack_sec: b.attack_sec,
            decay_sec: b.decay_sec,
            background_db: b.background_db,
            words: vec![
                word("up", &[(600.0, 0.2), (2400.0, 0.2)]),
                word("down", &[(2400.0, 0.2), (600.0, 0.2)]),
                word("left", &[(1500.0, 0.45)]),
                word("right", &[(3600.0, 0.15), (1000.0, 0.15), (3600.0, 0.15)]),
            ],
            events_per_word: 200,
            noises: vec![noise("white"), noise("pink"), noise("brown")],
        }
    }
}

impl FixtureSpec {
    pub fn burst_shape(&self) -> BurstShape {
        BurstShape {
            duration_sec: self.burst_sec,
            attack_sec: self.attack_sec,
            decay_sec: self.decay_sec,
            background_db: self.background_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigs: Vec<CoughSignature> = self
            .coughers
            .iter()
            .map(|c| CoughSignature { center_hz: c.center_hz, bandwidth_hz: c.bandwidth_hz })
            .collect();
        synth::validate_signatures(&sigs, SAMPLE_RATE)?;
        let mut ids: Vec<&str> = self.coughers.iter().map(|c| c.id.as_str()).collect();
        ids.extend(self.words.iter().map(|w| w.label.as_str()));
        ids.extend(self.noises.iter().map(|n| n.id.as_str()));
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() || ids.iter().any(|s| s.is_empty() || s.contains(['/', '\\'])) {
            return Err(invalid("fixture ids and labels must be unique, non-empty path segments"));
        }
        if self.words.iter().any(|w| w.label == COUGH_LABEL) {
            return Err(invalid("a tone word cannot be labelled \"cough\""));
        }
        for w in &self.words {
            let dur: f64 = w.segments.iter().map(|s| s.1).sum();
            if w.segments.is_empty() || dur > EVENT_SEC {
                return Err(invalid(format!("tone word {:?} must have segments fitting in {EVENT_SEC} s", w.label)));
            }
        }
        for n in &self.noises {
            noise_color(&n.color)?;
        }
        if !self.coughers.is_empty() && self.bursts_per_cougher == 0 {
            return Err(invalid("bursts_per_cougher must be positive"));
        }
        if !self.words.is_empty() && self.events_per_word == 0 {
            return Err(invalid("events_per_word must be positive"));
        }
        Ok(())
    }
}

fn noise_color(s: &str) -> Result<NoiseColor> {
    match s {
        "white" => Ok(NoiseColor::White),
        "pink" => Ok(NoiseColor::Pink),
        "brown" => Ok(NoiseColor::Brown),
        _ => Err(invalid(format!("unknown noise colour {s:?}"))),
    }
}

/// Writes the fixture corpus under `out_dir` with `manifest.jsonl`.
/// Split tags: `cough` (label cough, subject = cougher id), `command`
/// (tone words) and `noise`.
pub fn generate_synthetic_fixtures(spec: &FixtureSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let shape = spec.burst_shape();
    enum Job<'a> {
        Burst(&'a FixtureCougher, usize, usize),
        Word(&'a FixtureWord, usize, usize),
        Noise(&'a FixtureNoise, usize),
    }
    let mut jobs = Vec::new();
    for (ci, c) in spec.coughers.iter().enumerate() {
        jobs.extend((0..spec.bursts_per_cougher).map(|b| Job::Burst(c, ci, b)));
    }
    for (wi, w) in spec.words.iter().enumerate() {
        jobs.extend((0..spec.events_per_word).map(|k| Job::Word(w, wi, k)));
    }
    jobs.extend(spec.noises.iter().enumerate().map(|(i, n)| Job::Noise(n, i)));

    let entries = jobs
        .par_iter()
        .map(|job| {
            let (clip, entry) = match *job {
                Job::Burst(c, ci, b) => {
                    let sig = CoughSignature { center_hz: c.center_hz, bandwidth_hz: c.bandwidth_hz };
                    let clip = synth::cough_burst(&sig, &shape, SAMPLE_RATE, rng::mix(spec.seed, &[1, ci as u64, b as u64]))?;
                    let id = format!("coughs/{}/{b:04}", c.id);
                    (clip, (id, COUGH_LABEL.to_string(), Some(c.id.clone()), "cough"))
                }
                Job::Word(w, wi, k) => {
                    let word = ToneWord { segments: w.segments.clone() };
                    let clip = synth::tone_word(&word, EVENT_SEC, SAMPLE_RATE, rng::mix(spec.seed, &[2, wi as u64, k as u64]))?;
                    let id = format!("commands/{}/{k:04}", w.label);
                    (clip, (id, w.label.clone(), None, "command"))
                }
                Job::Noise(n, i) => {
                    let clip = synth::noise(noise_color(&n.color)?, n.duration_sec, SAMPLE_RATE, rng::mix(spec.seed, &[3, i as u64]))?;
                    (clip, (format!("noise/{}", n.id), NOISE_LABEL.to_string(), None, "noise"))
                }
            };
            let (id, label, subject, split) = entry;
            let path = format!("{id}.wav");
            write_wav(&out_dir.join(&path), &clip)?;
            Ok(ManifestEntry { id, path, label, subject, duration_sec: clip.duration_sec(), snr_db: None, split: split.into() })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = Manifest::new(entries)?;
    m.write(&out_dir.join("manifest.jsonl"))?;
    m.base = out_dir.to_path_buf();
    Ok(m)
}

/// Event counts per label.
pub fn label_counts(m: &Manifest) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for e in &m.entries {
        *out.entry(e.label.clone()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> FixtureSpec {
        FixtureSpec {
            bursts_per_cougher: 3,
            events_per_word: 2,
            noises: vec![FixtureNoise { id: "pink".into(), color: "pink".into(), duration_sec: 2.0 }],
            ..FixtureSpec::default()
        }
    }

    #[test]
    fn fixture_counts_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = FixtureSpec { words: vec![], ..small_spec() };
        let m = generate_synthetic_fixtures(&FixtureSpec { bursts_per_cougher: 30, ..spec.clone() }, a.path()).unwrap();
        let coughs = m.with_split("cough");
        assert_eq!(coughs.entries.len(), 150);
        assert_eq!(coughs.subject_durations().len(), 5);
        let m1 = generate_synthetic_fixtures(&spec, a.path()).unwrap();
        let m2 = generate_synthetic_fixtures(&spec, b.path()).unwrap();
        assert_eq!(m1.to_jsonl(), m2.to_jsonl());
        for e in &m1.entries {
            assert_eq!(std::fs::read(a.path().join(&e.path)).unwrap(), std::fs::read(b.path().join(&e.path)).unwrap());
        }
    }

    #[test]
    fn fixture_rejects_duplicate_signatures() {
        let mut spec = small_spec();
        spec.coughers[1].center_hz = spec.coughers[0].center_hz;
        spec.coughers[1].bandwidth_hz = spec.coughers[0].bandwidth_hz;
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_synthetic_fixtures(&spec, dir.path()).is_err());
    }

    #[test]
    fn cougher_task_contract() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic_fixtures(&FixtureSpec { bursts_per_cougher: 4, ..small_spec() }, dir.path()).unwrap();
        let coughs = m.with_split("cough");
        let clips = build_cougher_task(&coughs, &CougherTask::new(5, 2.0)).unwrap();
        assert_eq!(clips.len(), 5);
        assert!(clips.iter().all(|(_, c)| c.len() == 32_000));
        assert_eq!(clips[0].0, "c0");
        assert!(build_cougher_task(&coughs, &CougherTask::new(6, 2.0)).is_err());
        assert!(build_cougher_task(&coughs, &CougherTask::new(2, 10.0)).is_err());
        let random = CougherTask { random: true, seed: 3, ..CougherTask::new(2, 2.0) };
        assert_eq!(select_subjects(&coughs, &random).unwrap(), select_subjects(&coughs, &random).unwrap());
    }

    #[test]
    fn sc_build_small() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic_fixtures(&small_spec(), &dir.path().join("fx")).unwrap();
        let out = dir.path().join("sc");
        let opts = ScOptions { variant: Variant::All, max_coughs: 7, seed: 4, ..ScOptions::default() };
        let sc = build_sc_dataset(&m.with_split("command"), &m.with_split("cough"), &m.with_split("noise"), &opts, &out)
            .unwrap();
        let counts = label_counts(&sc);
        assert_eq!(counts.len(), 5);
        assert_eq!(counts[COUGH_LABEL], 7);
        for e in &sc.entries {
            let snr = e.snr_db.unwrap();
            assert!((34.0..=73.0).contains(&snr));
            assert_eq!(read_wav(&out.join(&e.path)).unwrap().len(), 16_000);
        }
        let again = build_sc_dataset(&m.with_split("command"), &m.with_split("cough"), &m.with_split("noise"), &opts, &out)
            .unwrap();
        assert_eq!(again.to_jsonl(), sc.to_jsonl());
        let sc11 = ScOptions { variant: Variant::Sc11, ..opts };
        assert!(build_sc_dataset(&m.with_split("command"), &m.with_split("cough"), &m.with_split("noise"), &sc11, &out)
            .is_err());
        let only = ScOptions { coughs_only: true, ..opts };
        let c = build_sc_dataset(&m.with_split("command"), &m.with_split("cough"), &m.with_split("noise"), &only, &out)
            .unwrap();
        assert!(c.entries.iter().all(|e| e.snr_db.is_some() == (e.label == COUGH_LABEL)));
    }

    #[test]
    fn command_selection() {
        let mut labels: Vec<String> = (0..40).map(|i| format!("w{i:02}")).collect();
        assert_eq!(select_commands(&labels, Variant::Sc36).unwrap().len(), 35);
        assert_eq!(select_commands(&labels, Variant::Sc11).unwrap()[0], "w00");
        labels.extend(SC10_COMMANDS.iter().map(|s| s.to_string()));
        labels.sort();
        assert_eq!(select_commands(&labels, Variant::Sc11).unwrap(), SC10_COMMANDS.map(String::from).to_vec());
        assert!(select_commands(&labels[..5], Variant::Sc11).is_err());
    }
}
