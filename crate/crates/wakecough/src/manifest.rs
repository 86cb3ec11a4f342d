//! JSON-lines corpus manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::wav::probe_duration;

pub const COUGH_LABEL: &str = "cough";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub duration_sec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default = "default_split")]
    pub split: String,
}

fn default_split() -> String {
    "all".into()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths are resolved against.
    pub base: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(invalid(format!("duplicate manifest id {:?}", e.id)));
            }
            if !(e.duration_sec > 0.0) {
                return Err(invalid(format!("entry {:?} has non-positive duration", e.id)));
            }
        }
        Ok(Self { entries, base: PathBuf::new() })
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.base.join(&entry.path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<ManifestEntry>>>()?;
        let mut m = Self::new(entries).map_err(|e| Error::format(path, e))?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries always serialise"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn filter(&self, keep: impl Fn(&ManifestEntry) -> bool) -> Manifest {
        Manifest { entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(), base: self.base.clone() }
    }

    pub fn with_split(&self, split: &str) -> Manifest {
        self.filter(|e| e.split == split)
    }

    pub fn with_label(&self, label: &str) -> Manifest {
        self.filter(|e| e.label == label)
    }

    /// Total duration per subject, sorted by subject id.
    pub fn subject_durations(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            if let Some(s) = &e.subject {
                *out.entry(s.clone()).or_insert(0.0) += e.duration_sec;
            }
        }
        out
    }

    /// Class count, event count and a duration histogram in 0.5 s bins.
    pub fn summary(&self) -> String {
        let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
        for e in &self.entries {
            *hist.entry((e.duration_sec / 0.5).floor() as u64).or_insert(0) += 1;
        }
        let mut s = format!("{} classes, {} events\n", self.labels().len(), self.entries.len());
        for (bin, n) in hist {
            s.push_str(&format!("  [{:.1}, {:.1}) s: {n}\n", bin as f64 * 0.5, (bin + 1) as f64 * 0.5));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `root/<label>/**.wav`
    ClassPerDir,
    /// `root/<subject>/**.wav`, every file labelled as a cough.
    SubjectPerDir,
}

/// One entry per WAV file under `root`, sorted by path. Files whose
/// header cannot be read are skipped with a warning.
pub fn scan_corpus(root: &Path, layout: Layout) -> Result<Manifest> {
    if !root.is_dir() {
        return Err(Error::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .min_depth(2)
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                log::warn!("skipping unreadable path: {err}");
                None
            }
        })
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    let mut entries = Vec::new();
    for path in files {
        let rel = path.strip_prefix(root).expect("walkdir yields paths under root");
        let dir = rel.components().next().expect("min_depth 2").as_os_str().to_string_lossy().into_owned();
        let duration_sec = match probe_duration(&path) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("skipping {e}");
                continue;
            }
        };
        let id = rel.with_extension("").to_string_lossy().replace('\\', "/");
        let (label, subject) = match layout {
            Layout::ClassPerDir => (dir, None),
            Layout::SubjectPerDir => (COUGH_LABEL.to_string(), Some(dir)),
        };
        entries.push(ManifestEntry {
            id,
            path: path.to_string_lossy().into_owned(),
            label,
            subject,
            duration_sec,
            snr_db: None,
            split: default_split(),
        });
    }
    if entries.is_empty() {
        return Err(Error::format(root, "no readable WAV files"));
    }
    Manifest::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wav::write_wav;
    use wakecough_core::audio::AudioClip;

    #[test]
    fn scan_two_classes() {
        let dir = tempfile::tempdir().unwrap();
        let clip = AudioClip::new(vec![0.1; 800], 16000).unwrap();
        for label in ["yes", "no"] {
            for i in 0..3 {
                write_wav(&dir.path().join(label).join(format!("{i}.wav")), &clip).unwrap();
            }
        }
        std::fs::write(dir.path().join("no/broken.wav"), b"nope").unwrap();
        let m = scan_corpus(dir.path(), Layout::ClassPerDir).unwrap();
        assert_eq!(m.entries.len(), 6);
        assert_eq!(m.labels(), vec!["no", "yes"]);
        assert_eq!(m.entries[0].id, "no/0");
        assert!((m.entries[0].duration_sec - 0.05).abs() < 1e-12);
        assert_eq!(scan_corpus(dir.path(), Layout::ClassPerDir).unwrap().to_jsonl(), m.to_jsonl());

        let p = dir.path().join("m.jsonl");
        m.write(&p).unwrap();
        assert_eq!(Manifest::read(&p).unwrap().entries, m.entries);

        let s = scan_corpus(dir.path(), Layout::SubjectPerDir).unwrap();
        assert_eq!(s.labels(), vec![COUGH_LABEL]);
        assert_eq!(s.subject_durations().len(), 2);
    }

    #[test]
    fn empty_tree_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_corpus(dir.path(), Layout::ClassPerDir).is_err());
        assert!(scan_corpus(&dir.path().join("missing"), Layout::ClassPerDir).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = ManifestEntry {
            id: "a".into(),
            path: "a.wav".into(),
            label: "x".into(),
            subject: None,
            duration_sec: 1.0,
            snr_db: None,
            split: "all".into(),
        };
        assert!(Manifest::new(vec![e.clone(), e]).is_err());
    }
}
