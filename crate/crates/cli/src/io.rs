//! File plumbing: atomic writes, dataset/model loading, run metadata.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use topoid_core::dataset::Dataset;
use topoid_core::model::DaModel;
use topoid_core::simgen::FeederModel;
use topoid_core::{Error, ErrorKind};

/// Exit status plus diagnostic.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn context(path: &Path, err: Error) -> Self {
        let mut e = Self::from(err);
        e.message = format!("{}: {}", path.display(), e.message);
        e
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err.kind() {
            ErrorKind::Io => EXIT_IO,
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Numerical => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.flush().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Dataset::read_csv(file).map_err(|e| CliError::context(path, e))
}

pub fn attach_clean(data: &mut Dataset, path: &Path) -> CliResult<()> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    data.attach_clean_csv(file).map_err(|e| CliError::context(path, e))
}

pub fn read_model(path: &Path) -> CliResult<DaModel> {
    DaModel::from_json(&read_text(path)?).map_err(|e| CliError::context(path, e))
}

pub fn read_feeder(path: Option<&Path>) -> CliResult<FeederModel> {
    match path {
        None => Ok(FeederModel::reference()),
        Some(p) => FeederModel::from_json(&read_text(p)?).map_err(|e| CliError::context(p, e)),
    }
}

pub fn dataset_csv(data: &Dataset) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::from(Error::from(e)))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub name: String,
    pub sha256: String,
}

/// Sidecar written next to every output. File names only, so runs in
/// different directories produce identical records.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feeder_hash: Option<String>,
    pub outputs: Vec<String>,
}

impl RunMetadata {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        Self {
            tool: "topoid".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            parameters,
            inputs: Vec::new(),
            feeder_hash: None,
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(InputRecord {
            name: file_name(path),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(file_name(path));
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, to_json(self)?.as_bytes())
    }
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// `<path>.meta.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Shortest round-trip float, switching to exponent form outside
/// [1e-4, 1e15) so tiny posteriors and huge ratios stay compact.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}
