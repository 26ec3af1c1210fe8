//! On-disk embedding stores.
//!
//! A store directory binds statements to fixed-width vectors for one
//! `(model, layer)`:
//!
//! ```text
//! meta.json         format_version, model_id, layer, dim, count, dtype, row_checksums
//! statements.jsonl  one statement per line, row order
//! embeddings.bin    count × dim, row-major, f32 little-endian
//! ```
//!
//! `row_checksums[i]` is the first 8 bytes (lowercase hex) of
//! `SHA-256(id_i ‖ 0x00 ‖ row_i as f32le)`, so reordering statement lines
//! without reordering rows is caught on read.

mod plant;

use std::collections::HashSet;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, Statement};
use crate::error::{Error, Result};

pub use plant::{plant_store, PlantPlan, PlantSpec, Planted};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";
pub const META_FILE: &str = "meta.json";
pub const STATEMENTS_FILE: &str = "statements.jsonl";
pub const MATRIX_FILE: &str = "embeddings.bin";

/// A statement the producer could not embed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub format_version: u32,
    pub model_id: String,
    pub layer: i32,
    pub dim: usize,
    pub count: usize,
    pub dtype: String,
    pub row_checksums: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_wrapper: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedRow>,
    /// Relative tolerance for nondeterministic producers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub meta: StoreMeta,
    pub statements: Vec<Statement>,
    /// Row-major `count × dim`.
    pub matrix: Vec<f32>,
}

pub fn row_checksum(id: &str, row: &[f32]) -> String {
    let mut h = Sha256::new();
    h.update(id.as_bytes());
    h.update([0u8]);
    for v in row {
        h.update(v.to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl EmbeddingStore {
    /// Builds a store and its meta; checksums are computed here.
    pub fn new(model_id: &str, layer: i32, dim: usize, statements: Vec<Statement>, matrix: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("dim must be at least 1".into()));
        }
        if matrix.len() != statements.len() * dim {
            return Err(Error::Validation(format!(
                "{} statements need {} matrix entries at dim {dim}, got {}",
                statements.len(),
                statements.len() * dim,
                matrix.len()
            )));
        }
        let row_checksums = statements
            .iter()
            .zip(matrix.chunks_exact(dim))
            .map(|(s, r)| row_checksum(&s.id, r))
            .collect();
        let store = Self {
            meta: StoreMeta {
                format_version: FORMAT_VERSION,
                model_id: model_id.to_string(),
                layer,
                dim,
                count: statements.len(),
                dtype: DTYPE.to_string(),
                row_checksums,
                prompt_wrapper: None,
                skipped: Vec::new(),
                tolerance: None,
            },
            statements,
            matrix,
        };
        store.validate()?;
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.meta.dim..(i + 1) * self.meta.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// A new store holding the given rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let statements = rows.iter().map(|&i| self.statements[i].clone()).collect();
        let matrix = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        let mut out = Self::new(&self.meta.model_id, self.meta.layer, self.meta.dim, statements, matrix)?;
        out.meta.prompt_wrapper = self.meta.prompt_wrapper.clone();
        out.meta.tolerance = self.meta.tolerance;
        Ok(out)
    }

    /// Row indices whose statement belongs to one of `datasets`.
    pub fn rows_in(&self, datasets: &[&str]) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| datasets.contains(&self.statements[i].dataset.as_str()))
            .collect()
    }

    /// Dataset names in first-appearance order.
    pub fn datasets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.statements {
            if !out.contains(&s.dataset) {
                out.push(s.dataset.clone());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: m.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if m.dtype != DTYPE {
            return Err(Error::Validation(format!("dtype {:?} is not {DTYPE:?}", m.dtype)));
        }
        if m.dim == 0 {
            return Err(Error::Validation("dim must be at least 1".into()));
        }
        if m.count != self.statements.len() || m.count * m.dim != self.matrix.len() {
            return Err(Error::Validation(format!(
                "meta count {} disagrees with {} statements / {} matrix entries",
                m.count,
                self.statements.len(),
                self.matrix.len()
            )));
        }
        if m.row_checksums.len() != m.count {
            return Err(Error::Validation(format!(
                "{} row checksums for {} rows",
                m.row_checksums.len(),
                m.count
            )));
        }
        let mut ids = HashSet::new();
        for (i, s) in self.statements.iter().enumerate() {
            s.validate()?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate statement id {:?}", s.id)));
            }
            let row = self.row(i);
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "row {i} ({}) has non-finite entry at column {j}",
                    s.id
                )));
            }
            if row_checksum(&s.id, row) != m.row_checksums[i] {
                return Err(Error::Checksum { row: i, id: s.id.clone() });
            }
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes the three store files. The store is validated first, and the
/// meta file is removed before and written after the data files, so an
/// interrupted write never leaves a readable but inconsistent store.
pub fn write_store(store: &EmbeddingStore, dir: &Path) -> Result<()> {
    store.validate()?;
    fs::create_dir_all(dir)?;
    let meta_path = dir.join(META_FILE);
    if meta_path.exists() {
        fs::remove_file(&meta_path)?;
    }

    let mut lines = Vec::new();
    dataset::write_jsonl(&mut lines, &store.statements)?;
    write_atomic(&dir.join(STATEMENTS_FILE), &lines)?;

    let bytes: Vec<u8> = store.matrix.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_atomic(&dir.join(MATRIX_FILE), &bytes)?;

    let mut meta = serde_json::to_vec_pretty(&store.meta)?;
    meta.push(b'\n');
    write_atomic(&meta_path, &meta)
}

pub fn read_meta(dir: &Path) -> Result<StoreMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path)?;
    let meta: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(&path, &e))?;
    // The version is checked before the rest of the schema so a future
    // format reports a version error rather than a parse error.
    let version = meta.get("format_version").and_then(serde_json::Value::as_u64);
    match version {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Version {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            })
        }
        None => {
            return Err(Error::Malformed {
                path,
                line: 1,
                msg: "missing integer format_version".into(),
            })
        }
    }
    serde_json::from_value(meta).map_err(|e| Error::Malformed {
        path,
        line: 1,
        msg: e.to_string(),
    })
}

fn malformed(path: &Path, e: &serde_json::Error) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    }
}

pub fn read_store(dir: &Path) -> Result<EmbeddingStore> {
    let meta = read_meta(dir)?;
    let st_path = dir.join(STATEMENTS_FILE);
    let statements = dataset::read_jsonl(BufReader::new(fs::File::open(&st_path)?), &st_path)?;
    if statements.len() != meta.count {
        return Err(Error::Validation(format!(
            "{}: {} statement lines, meta count is {}",
            st_path.display(),
            statements.len(),
            meta.count
        )));
    }

    let mx_path: PathBuf = dir.join(MATRIX_FILE);
    let bytes = fs::read(&mx_path)?;
    let expected = (meta.count * meta.dim * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: mx_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let matrix = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let store = EmbeddingStore {
        meta,
        statements,
        matrix,
    };
    store.validate()?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Polarity;

    fn stmt(id: &str, label: bool) -> Statement {
        Statement {
            id: id.into(),
            text: format!("Statement {id}."),
            label: Some(label),
            dataset: "T".into(),
            polarity: Polarity::Positive,
            pair_id: None,
            chance: None,
        }
    }

    fn three_by_four() -> EmbeddingStore {
        let st = vec![stmt("a", true), stmt("b", false), stmt("c", true)];
        let m: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 2.0).collect();
        EmbeddingStore::new("toy", -1, 4, st, m).unwrap()
    }

    #[test]
    fn write_produces_three_files_of_expected_size() {
        let dir = tempfile::tempdir().unwrap();
        write_store(&three_by_four(), dir.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, vec![MATRIX_FILE, META_FILE, STATEMENTS_FILE]);
        assert_eq!(fs::metadata(dir.path().join(MATRIX_FILE)).unwrap().len(), 3 * 4 * 4);
    }

    #[test]
    fn roundtrip_and_rewrite() {
        let dir = tempfile::tempdir().unwrap();
        let s = three_by_four();
        write_store(&s, dir.path()).unwrap();
        write_store(&s, dir.path()).unwrap();
        assert_eq!(read_store(dir.path()).unwrap(), s);
    }

    #[test]
    fn nan_row_rejected_before_writing() {
        let mut s = three_by_four();
        s.matrix[5] = f32::NAN;
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("st");
        assert!(matches!(write_store(&s, &target), Err(Error::Validation(_))));
        assert!(!target.exists());
    }

    #[test]
    fn checksum_reference_value() {
        // Independent of this module: SHA-256 of "a\0" followed by 1.0f32 LE.
        let mut bytes = b"a\0".to_vec();
        bytes.extend(1.0f32.to_le_bytes());
        let full: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(row_checksum("a", &[1.0]), full[..16]);
    }

    #[test]
    fn unknown_meta_fields_are_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        write_store(&three_by_four(), dir.path()).unwrap();
        let p = dir.path().join(META_FILE);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        v["producer"] = "extractor 0.3".into();
        fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
        read_store(dir.path()).unwrap();
    }

    #[test]
    fn select_recomputes_checksums() {
        let s = three_by_four();
        let sub = s.select(&[2, 0]).unwrap();
        assert_eq!(sub.statements[0].id, "c");
        assert_eq!(sub.row(1), s.row(0));
        sub.validate().unwrap();
    }
}
