//! Fixed-dimensional utterance embeddings (i-, x- and d-vectors) keyed by
//! subject and segment.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::classifiers::LabeledSet;
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbeddingKind {
    IVector,
    XVector,
    DVector,
}

impl EmbeddingKind {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingKind::IVector => 100,
            EmbeddingKind::XVector => 512,
            EmbeddingKind::DVector => 256,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EmbeddingKind::IVector => "ivector",
            EmbeddingKind::XVector => "xvector",
            EmbeddingKind::DVector => "dvector",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [EmbeddingKind::IVector, EmbeddingKind::XVector, EmbeddingKind::DVector]
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Rows expected for `t` seconds of audio: 0.1 s utterances for
    /// i-vectors, 0.75 s hops for x-vectors, 0.5 s segments for d-vectors.
    pub fn expected_rows(&self, t_sec: f64) -> usize {
        let hop = match self {
            EmbeddingKind::IVector => 0.1,
            EmbeddingKind::XVector => 0.75,
            EmbeddingKind::DVector => 0.5,
        };
        (t_sec / hop + 1e-9) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub subject: String,
    pub segment: u64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub kind: EmbeddingKind,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingSet {
    /// Checks dimensions, finiteness and unique `(subject, segment)` keys.
    pub fn new(kind: EmbeddingKind, rows: Vec<EmbeddingRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            check_dim(kind.dim(), r.vector.len())?;
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("embedding"));
            }
            if !seen.insert((r.subject.as_str(), r.segment)) {
                return Err(invalid(alloc::format!("duplicate segment {} for subject {}", r.segment, r.subject)));
            }
        }
        Ok(Self { kind, rows })
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.subject.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn rows_for(&self, subject: &str) -> usize {
        self.rows.iter().filter(|r| r.subject == subject).count()
    }

    /// Subjects whose row count differs from the expectation for `t`
    /// seconds, with the count found.
    pub fn count_mismatches(&self, t_sec: f64) -> Vec<(String, usize)> {
        let want = self.kind.expected_rows(t_sec);
        self.subjects()
            .into_iter()
            .filter_map(|s| {
                let n = self.rows_for(&s);
                (n != want).then_some((s, n))
            })
            .collect()
    }

    /// Rows of `subjects` in file order, labelled by rank in sorted id order.
    pub fn to_labeled_set(&self, subjects: &[String]) -> Result<LabeledSet> {
        let mut sorted: Vec<&str> = subjects.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let known = self.subjects();
        for s in &sorted {
            if !known.iter().any(|k| k == s) {
                return Err(invalid(alloc::format!("subject {s} has no embeddings")));
            }
        }
        let d = self.kind.dim();
        let mut values = Vec::new();
        let mut y = Vec::new();
        for r in &self.rows {
            if let Ok(label) = sorted.binary_search(&r.subject.as_str()) {
                values.extend_from_slice(&r.vector);
                y.push(label);
            }
        }
        let x = Matrix::from_vec(y.len(), d, values)?;
        LabeledSet::new(x, y, sorted.len())
    }
}
