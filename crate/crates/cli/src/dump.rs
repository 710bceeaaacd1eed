//! Score dumps: one record per sample per detector, tab-delimited with a
//! header row. Floats print in shortest round-trip form, so a dump is
//! byte-stable and parses back to the exact scores.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use flowguard_core::detect::{DetectorKind, Score, ScoredSample};

use crate::{IoError, Result};

pub const HEADER: &str = "sample_id\tdataset\tdetector\tscore\tfailure";

pub fn write_dump(samples: &[ScoredSample], dataset_tag: &str, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for sample in samples {
        for (kind, score) in &sample.scores {
            match score {
                Score::Finite(v) => out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t0\n",
                    sample.id,
                    dataset_tag,
                    kind.name(),
                    v
                )),
                Score::Failure => out.push_str(&format!(
                    "{}\t{}\t{}\tinf\t1\n",
                    sample.id,
                    dataset_tag,
                    kind.name()
                )),
            }
        }
    }
    fs::File::create(path)
        .map_err(|e| IoError::io(format!("creating {}", path.display()), e))?
        .write_all(out.as_bytes())
        .map_err(|e| IoError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

/// Parsed dump: per-detector score vectors in sample order plus the
/// dataset tag shared by all records.
pub struct Dump {
    pub dataset_tag: String,
    pub scores: BTreeMap<DetectorKind, Vec<Score>>,
}

pub fn read_dump(path: &Path) -> Result<Dump> {
    let text = fs::read_to_string(path)
        .map_err(|e| IoError::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        other => {
            return Err(IoError::format(
                path,
                0,
                format!("bad dump header {other:?}"),
            ))
        }
    }
    let mut dataset_tag: Option<String> = None;
    let mut scores: BTreeMap<DetectorKind, Vec<Score>> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 5 {
            return Err(IoError::format(
                path,
                0,
                format!("line {}: expected 5 fields, got {}", lineno + 2, parts.len()),
            ));
        }
        let tag = parts[1].to_string();
        match &dataset_tag {
            None => dataset_tag = Some(tag),
            Some(t) if *t != tag => {
                return Err(IoError::format(
                    path,
                    0,
                    format!("line {}: mixed dataset tags {t:?} and {tag:?}", lineno + 2),
                ))
            }
            _ => {}
        }
        let kind = DetectorKind::parse(parts[2])?;
        let score = if parts[4] == "1" {
            Score::Failure
        } else {
            let v: f64 = parts[3].parse().map_err(|_| {
                IoError::format(path, 0, format!("line {}: bad score {:?}", lineno + 2, parts[3]))
            })?;
            Score::Finite(v)
        };
        scores.entry(kind).or_default().push(score);
    }
    let dataset_tag =
        dataset_tag.ok_or_else(|| IoError::format(path, 0, "dump contains no records"))?;
    Ok(Dump {
        dataset_tag,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip_preserves_exact_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.tsv");
        let samples = vec![
            ScoredSample {
                id: 0,
                scores: [
                    (DetectorKind::Re, Score::Finite(0.123456789012345)),
                    (DetectorKind::Pre, Score::Failure),
                ]
                .into_iter()
                .collect(),
            },
            ScoredSample {
                id: 1,
                scores: [
                    (DetectorKind::Re, Score::Finite(-3.5e-11)),
                    (DetectorKind::Pre, Score::Finite(7.0)),
                ]
                .into_iter()
                .collect(),
            },
        ];
        write_dump(&samples, "indist:ring", &path).unwrap();
        let dump = read_dump(&path).unwrap();
        assert_eq!(dump.dataset_tag, "indist:ring");
        assert_eq!(dump.scores[&DetectorKind::Re].len(), 2);
        match dump.scores[&DetectorKind::Re][0] {
            Score::Finite(v) => assert_eq!(v.to_bits(), 0.123456789012345f64.to_bits()),
            _ => panic!("expected finite"),
        }
        assert!(dump.scores[&DetectorKind::Pre][0].is_failure());
    }

    #[test]
    fn bad_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        fs::write(&path, "nope\n").unwrap();
        assert!(matches!(read_dump(&path), Err(IoError::Format { .. })));
    }
}
