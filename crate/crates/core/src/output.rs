//! Artifacts: CSV series, JSON documents and the run manifest.
//!
//! Files are written to a temporary sibling and renamed into place, so an
//! interrupted run never leaves a truncated file under the final name.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::TheoryConstants;

pub const LOCK_FILE: &str = ".nfield.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("output directory {0} is locked by another run")]
    Locked(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::I(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::B(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

pub fn csv_bytes<R>(header: &[&str], rows: R) -> Result<Vec<u8>, OutputError>
where
    R: IntoIterator<Item = Vec<Cell>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| OutputError::Csv(e.to_string()))?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(|e| OutputError::Csv(e.to_string()))?;
    }
    w.into_inner().map_err(|e| OutputError::Csv(e.to_string()))
}

/// Exclusive owner of an output directory. Dropping releases the lock.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn open(root: &Path) -> Result<Self, OutputError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(OutputError::Locked(root.display().to_string()));
            }
            Err(e) => return Err(io_err(&lock)(e)),
        }
        Ok(OutputDir { root: root.to_path_buf(), lock, checksums: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.checksums
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, OutputError> {
        let path = self.root.join(name);
        atomic_write(&path, bytes)?;
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<PathBuf, OutputError>
    where
        R: IntoIterator<Item = Vec<Cell>>,
    {
        let bytes = csv_bytes(header, rows)?;
        self.write(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, OutputError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| OutputError::Json(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Fills in the checksums and writes `manifest.json`.
    pub fn write_manifest(&self, manifest: &mut RunManifest) -> Result<PathBuf, OutputError> {
        manifest.outputs = self.checksums.clone();
        let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|e| OutputError::Json(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.root.join(MANIFEST_FILE);
        atomic_write(&path, &bytes)?;
        Ok(path)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: String,
    pub config: Value,
    pub constants: Option<TheoryConstants>,
    pub q: Option<f64>,
    pub rho: Option<f64>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    /// File name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub summary: Value,
    pub error: Option<ManifestError>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: "nfield".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            status: "ok".into(),
            config: Value::Null,
            constants: None,
            q: None,
            rho: None,
            threads: 1,
            wall_clock_seconds: 0.0,
            outputs: BTreeMap::new(),
            summary: Value::Null,
            error: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, std::f64::consts::PI] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn checksum_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn csv_layout() {
        let bytes = csv_bytes(&["i", "x", "ok"], vec![vec![Cell::from(0usize), Cell::from(0.5), Cell::from(true)]]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "i,x,ok\n0,5.0000000000000000e-1,true\n");
    }

    #[test]
    fn directory_lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::open(dir.path()).unwrap();
        assert!(matches!(OutputDir::open(dir.path()), Err(OutputError::Locked(_))));
        out.write("a.txt", b"abc").unwrap();
        let mut m = RunManifest::new("simulate");
        out.write_manifest(&mut m).unwrap();
        assert_eq!(m.outputs["a.txt"], sha256_hex(b"abc"));
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.contains(".tmp-"))
            .collect();
        assert!(leftovers.is_empty());
        drop(out);
        assert!(OutputDir::open(dir.path()).is_ok());
    }
}
