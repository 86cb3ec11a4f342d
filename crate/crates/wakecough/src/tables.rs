//! CSV import and export. Floats are written with 17 significant digits
//! so a read back is bit-exact.

use std::path::Path;

use wakecough_core::cnn::EpochLog;
use wakecough_core::embeddings::{EmbeddingKind, EmbeddingRow, EmbeddingSet};
use wakecough_core::eval::ConfusionMatrix;
use wakecough_core::features::FeatureMap;
use wakecough_core::linalg::Matrix;

use crate::error::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

/// Writes a header and rows of already formatted cells.
pub fn write_rows<S: AsRef<str>>(path: &Path, header: &[S], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_floats(path: &Path, line: u64, fields: &csv::StringRecord, skip: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .skip(skip)
        .enumerate()
        .map(|(i, f)| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("line {line}, column {}: {f:?} is not a number", i + skip + 1)))
        })
        .collect()
}

/// Columns: `subject_id, segment_index`, then exactly `kind.dim()` values.
pub fn import_embeddings(path: &Path, kind: EmbeddingKind) -> Result<EmbeddingSet> {
    let mut rd = reader(path)?;
    rd.headers().map_err(|e| Error::format(path, e))?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != kind.dim() + 2 {
            return Err(Error::format(
                path,
                format!("line {line}: {} values, {} embeddings need {}", rec.len().saturating_sub(2), kind.name(), kind.dim()),
            ));
        }
        let segment = rec[1]
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::format(path, format!("line {line}: segment index {:?} is not an integer", &rec[1])))?;
        let vector = parse_floats(path, line, &rec, 2)?;
        rows.push(EmbeddingRow { subject: rec[0].trim().to_string(), segment, vector });
    }
    EmbeddingSet::new(kind, rows).map_err(|e| Error::format(path, e))
}

pub fn export_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let mut header = vec!["subject_id".to_string(), "segment_index".to_string()];
    header.extend((0..set.kind.dim()).map(|i| format!("e{i}")));
    let rows = set.rows.iter().map(|r| {
        let mut cells = vec![r.subject.clone(), r.segment.to_string()];
        cells.extend(r.vector.iter().map(|&v| fmt_f64(v)));
        cells
    });
    write_rows(path, &header, rows)
}

/// One labelled vector per row: `utterance_id, cougher_id, w0..`.
#[derive(Debug, Clone, PartialEq)]
pub struct IvectorTable {
    pub utterance_ids: Vec<String>,
    pub cougher_ids: Vec<String>,
    pub vectors: Matrix,
}

pub fn write_ivectors(path: &Path, table: &IvectorTable) -> Result<()> {
    let mut header = vec!["utterance_id".to_string(), "cougher_id".to_string()];
    header.extend((0..table.vectors.cols()).map(|i| format!("w{i}")));
    let rows = (0..table.vectors.rows()).map(|i| {
        let mut cells = vec![table.utterance_ids[i].clone(), table.cougher_ids[i].clone()];
        cells.extend(table.vectors.row(i).iter().map(|&v| fmt_f64(v)));
        cells
    });
    write_rows(path, &header, rows)
}

pub fn read_ivectors(path: &Path) -> Result<IvectorTable> {
    let mut rd = reader(path)?;
    let width = rd.headers().map_err(|e| Error::format(path, e))?.len();
    if width < 3 {
        return Err(Error::format(path, "need utterance_id, cougher_id and at least one value column"));
    }
    let (mut utts, mut ids, mut data) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::format(path, format!("line {line}: {} columns, header has {width}", rec.len())));
        }
        utts.push(rec[0].to_string());
        ids.push(rec[1].to_string());
        data.extend(parse_floats(path, line, &rec, 2)?);
    }
    let vectors = Matrix::from_vec(utts.len(), width - 2, data)?;
    Ok(IvectorTable { utterance_ids: utts, cougher_ids: ids, vectors })
}

/// Rows are true classes, columns predictions.
pub fn write_confusion(path: &Path, cm: &ConfusionMatrix, names: &[String]) -> Result<()> {
    let mut header = vec!["true\\pred".to_string()];
    header.extend(names.iter().cloned());
    let rows = (0..cm.classes).map(|i| {
        let mut cells = vec![names[i].clone()];
        cells.extend(cm.row(i).iter().map(|c| c.to_string()));
        cells
    });
    write_rows(path, &header, rows)
}

pub fn write_cnn_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let rows = log.iter().map(|l| vec![l.epoch.to_string(), fmt_f64(l.loss), fmt_f64(l.accuracy)]);
    write_rows(path, &["epoch", "loss", "train_accuracy"], rows)
}

pub fn write_feature_map_csv(path: &Path, map: &FeatureMap) -> Result<()> {
    let bins = map.cols - 2;
    let mut header: Vec<String> = (0..bins).map(|i| format!("logmag{i}")).collect();
    header.push("zcr".into());
    header.push("kurtosis".into());
    let rows = (0..map.rows).map(|r| map.row(r).iter().map(|v| format!("{v:.8e}")).collect());
    write_rows(path, &header, rows)
}

pub fn write_projection(path: &Path, ids: &[String], proj: &Matrix) -> Result<()> {
    let rows = (0..proj.rows()).map(|i| vec![ids[i].clone(), fmt_f64(proj[(i, 0)]), fmt_f64(proj[(i, 1)])]);
    write_rows(path, &["cougher_id", "pc1", "pc2"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(kind: EmbeddingKind) -> EmbeddingSet {
        let rows = (0..6)
            .map(|i| EmbeddingRow {
                subject: format!("s{}", i % 2),
                segment: i as u64 / 2,
                vector: (0..kind.dim()).map(|j| ((i * 31 + j) as f64).sin() / 3.0).collect(),
            })
            .collect();
        EmbeddingSet::new(kind, rows).unwrap()
    }

    #[test]
    fn embeddings_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let s = set(EmbeddingKind::XVector);
        export_embeddings(&p, &s).unwrap();
        assert_eq!(import_embeddings(&p, EmbeddingKind::XVector).unwrap(), s);
        let err = import_embeddings(&p, EmbeddingKind::DVector).unwrap_err();
        assert!(err.to_string().contains("need 256"), "{err}");
    }

    #[test]
    fn embedding_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let s = set(EmbeddingKind::DVector);
        export_embeddings(&p, &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let bad = text.replacen("s1,0,", "s1,0,abc", 1);
        std::fs::write(&p, bad).unwrap();
        assert!(import_embeddings(&p, EmbeddingKind::DVector).unwrap_err().to_string().contains("not a number"));
        let mut lines: Vec<&str> = text.lines().collect();
        lines.push(lines[1]);
        std::fs::write(&p, lines.join("\n")).unwrap();
        assert!(import_embeddings(&p, EmbeddingKind::DVector).is_err());
    }

    #[test]
    fn ivector_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("iv.csv");
        let t = IvectorTable {
            utterance_ids: vec!["a-0".into(), "b-0".into()],
            cougher_ids: vec!["a".into(), "b".into()],
            vectors: Matrix::from_vec(2, 3, vec![0.1, -2.5e-300, 1.0 / 3.0, 4.0, 5.0, 6.0]).unwrap(),
        };
        write_ivectors(&p, &t).unwrap();
        assert_eq!(read_ivectors(&p).unwrap(), t);
    }
}
