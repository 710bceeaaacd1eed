//! Dataset files: the binary `FGD1` format and a delimited-text import
//! path for hand-made fixtures.
//!
//! Layout: magic `FGD1`, a version byte, a length-prefixed UTF-8 metadata
//! header (`key=value` lines: tag, seed, d, n, labels, plus free-form
//! provenance keys), the row-major single-precision payload, then one
//! label byte per sample when labels are present.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flowguard_core::data::{DatasetHandle, Provenance};

use crate::{IoError, Result};

const MAGIC: &[u8; 4] = b"FGD1";
const VERSION: u8 = 1;

pub fn save_dataset(
    handle: &DatasetHandle,
    extra_meta: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    let mut header = String::new();
    header.push_str(&format!("tag={}\n", handle.tag.render()));
    header.push_str(&format!("seed={}\n", handle.seed));
    header.push_str(&format!("d={}\n", handle.dim()));
    header.push_str(&format!("n={}\n", handle.len()));
    header.push_str(&format!("labels={}\n", handle.labels().is_some() as u8));
    for (k, v) in extra_meta {
        header.push_str(&format!("{k}={v}\n"));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in handle.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = handle.labels() {
        out.extend_from_slice(labels);
    }
    fs::File::create(path)
        .map_err(|e| IoError::io(format!("creating {}", path.display()), e))?
        .write_all(&out)
        .map_err(|e| IoError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHandle, BTreeMap<String, String>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| IoError::io(format!("opening {}", path.display()), e))?
        .read_to_end(&mut bytes)
        .map_err(|e| IoError::io(format!("reading {}", path.display()), e))?;
    let fail = |offset: u64, msg: &str| IoError::format(path, offset, msg);

    if bytes.len() < 9 {
        return Err(fail(bytes.len() as u64, "file too short for the fixed header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail(0, "bad magic; expected FGD1"));
    }
    if bytes[4] != VERSION {
        return Err(fail(4, &format!("unsupported version {}", bytes[4])));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if bytes.len() < 9 + header_len {
        return Err(fail(bytes.len() as u64, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[9..9 + header_len])
        .map_err(|_| fail(9, "header is not valid UTF-8"))?;

    let mut meta = BTreeMap::new();
    for line in header.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| fail(9, &format!("bad metadata line {line:?}")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    let take = |meta: &mut BTreeMap<String, String>, key: &str| -> Result<String> {
        meta.remove(key)
            .ok_or_else(|| fail(9, &format!("missing metadata key {key:?}")))
    };
    let tag = Provenance::parse(&take(&mut meta, "tag")?)?;
    let seed: u64 = take(&mut meta, "seed")?
        .parse()
        .map_err(|_| fail(9, "bad seed"))?;
    let d: usize = take(&mut meta, "d")?.parse().map_err(|_| fail(9, "bad d"))?;
    let n: usize = take(&mut meta, "n")?.parse().map_err(|_| fail(9, "bad n"))?;
    let has_labels = take(&mut meta, "labels")? == "1";

    let mut offset = 9 + header_len;
    let payload = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| fail(9, "sample count overflows"))?;
    if bytes.len() < offset + payload {
        return Err(fail(
            offset as u64,
            &format!(
                "payload needs {payload} bytes for {n}x{d} samples, {} remain",
                bytes.len() - offset
            ),
        ));
    }
    let values: Vec<f32> = bytes[offset..offset + payload]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    offset += payload;

    let labels = if has_labels {
        if bytes.len() < offset + n {
            return Err(fail(
                offset as u64,
                &format!("label block needs {n} bytes, {} remain", bytes.len() - offset),
            ));
        }
        let l = bytes[offset..offset + n].to_vec();
        offset += n;
        Some(l)
    } else {
        None
    };
    if offset != bytes.len() {
        return Err(fail(
            offset as u64,
            &format!("{} trailing bytes after the declared payload", bytes.len() - offset),
        ));
    }
    let handle = DatasetHandle::from_rows(d, values, labels, tag, seed)?;
    Ok((handle, meta))
}

/// Plain delimited-text import: one sample per row, whitespace- or
/// comma-separated coordinates; a trailing `#label` column is accepted.
pub fn import_text(path: &Path, tag: Provenance, seed: u64) -> Result<DatasetHandle> {
    let text = fs::read_to_string(path)
        .map_err(|e| IoError::io(format!("reading {}", path.display()), e))?;
    let mut values: Vec<f32> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut any_labels = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (coords_part, label_part) = match line.split_once('#') {
            Some((c, l)) => (c, Some(l.trim())),
            None => (line, None),
        };
        let row: Vec<f32> = coords_part
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f32>().map_err(|_| {
                    IoError::format(
                        path,
                        0,
                        format!("line {}: bad coordinate {t:?}", lineno + 1),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if row.is_empty() {
            continue;
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(IoError::format(
                    path,
                    0,
                    format!("line {}: expected {d} coordinates, got {}", lineno + 1, row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
        if let Some(l) = label_part {
            any_labels = true;
            labels.push(l.parse::<u8>().map_err(|_| {
                IoError::format(path, 0, format!("line {}: bad label {l:?}", lineno + 1))
            })?);
        } else if any_labels {
            return Err(IoError::format(
                path,
                0,
                format!("line {}: missing label column", lineno + 1),
            ));
        }
    }
    let dim = dim.ok_or_else(|| IoError::format(path, 0, "no samples in text import"))?;
    Ok(DatasetHandle::from_rows(
        dim,
        values,
        any_labels.then_some(labels),
        tag,
        seed,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowguard_core::data::gen_indist;

    #[test]
    fn round_trip_preserves_samples_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fgd");
        let handle = gen_indist("ring", 32, 5, 7).unwrap();
        let mut extra = BTreeMap::new();
        extra.insert("note".to_string(), "fixture".to_string());
        save_dataset(&handle, &extra, &path).unwrap();
        let (loaded, meta) = load_dataset(&path).unwrap();
        assert_eq!(loaded, handle);
        assert_eq!(meta["note"], "fixture");
    }

    #[test]
    fn wrong_magic_and_truncation_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fgd");
        fs::write(&path, b"XXXX\x01\x00\x00\x00\x00").unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(IoError::Format { offset: 0, .. })
        ));

        let good = dir.path().join("good.fgd");
        let handle = gen_indist("ring", 8, 4, 7).unwrap();
        save_dataset(&handle, &BTreeMap::new(), &good).unwrap();
        let bytes = fs::read(&good).unwrap();
        fs::write(&good, &bytes[..bytes.len() - 10]).unwrap();
        match load_dataset(&good) {
            Err(IoError::Format { message, .. }) => {
                assert!(message.contains("remain") || message.contains("label"), "{message}")
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn text_import_reads_rows_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.txt");
        fs::write(&path, "0.1 0.2 0.3 # 0\n0.4,0.5,0.6 # 1\n").unwrap();
        let handle = import_text(&path, Provenance::InDist("fixture".into()), 0).unwrap();
        assert_eq!(handle.dim(), 3);
        assert_eq!(handle.len(), 2);
        assert_eq!(handle.labels().unwrap(), &[0, 1]);
        assert_eq!(handle.row(1), &[0.4, 0.5, 0.6]);
    }
}
