//! Binary feature files (`LBEM`), text label files and the JSON manifest
//! that ties them together.
//!
//! Feature layout: magic `LBEM`, u32 LE version (1), u64 LE N, u64 LE d,
//! then N·d f32 LE values row-major. Labels: one base-10 integer per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EmbeddingSet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LBEM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub name: String,
}

impl Manifest {
    fn resolve(&self, base: &Path) -> (PathBuf, PathBuf) {
        (base.join(&self.features), base.join(&self.labels))
    }
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

/// Loads the set referenced by a JSON manifest. Paths inside the manifest
/// are resolved relative to the manifest's directory.
pub fn load_manifest(manifest_path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let (features, labels) = manifest.resolve(parent_dir(manifest_path));
    load_embeddings(&features, &labels, manifest.name)
}

/// Reads a feature file and its label file. Rows are unit-normalized and
/// labels densified; the original ids remain available through
/// [`EmbeddingSet::original_ids`].
pub fn load_embeddings(features_path: &Path, labels_path: &Path, name: impl Into<String>) -> Result<EmbeddingSet> {
    let bytes = fs::read(features_path).map_err(|e| Error::io(features_path, e))?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: features_path.to_owned(),
            expected: "LBEM",
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Malformed {
            path: features_path.to_owned(),
            reason: format!("header truncated at {} bytes", bytes.len()),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: features_path.to_owned(),
            found: version,
        });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::SizeMismatch(format!("N={n}, d={d} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::SizeMismatch(format!(
            "{}: header declares {n}×{d} values ({expected} bytes) but payload has {} bytes",
            features_path.display(),
            payload.len()
        )));
    }
    let features: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let text = fs::read_to_string(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let labels = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<i64>().map_err(|e| Error::Malformed {
                path: labels_path.to_owned(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != n {
        return Err(Error::SizeMismatch(format!(
            "{} has {} labels for {n} feature rows",
            labels_path.display(),
            labels.len()
        )));
    }
    EmbeddingSet::new(features, d, &labels, name)
}

/// Writes `<stem>.lbem`, `<stem>.labels` and the manifest itself, where
/// `<stem>` is the manifest file stem. Returns the manifest written.
pub fn save_embeddings(set: &EmbeddingSet, manifest_path: impl AsRef<Path>) -> Result<Manifest> {
    let manifest_path = manifest_path.as_ref();
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("embeddings")
        .to_owned();
    let manifest = Manifest {
        features: PathBuf::from(format!("{stem}.lbem")),
        labels: PathBuf::from(format!("{stem}.labels")),
        name: set.name.clone(),
    };
    let (fpath, lpath) = manifest.resolve(parent_dir(manifest_path));

    let write = |path: &Path, f: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    };

    write(&fpath, &|w| {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(set.len() as u64).to_le_bytes())?;
        w.write_all(&(set.dim() as u64).to_le_bytes())?;
        for v in set.features() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })?;
    write(&lpath, &|w| {
        for &l in set.labels() {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}
