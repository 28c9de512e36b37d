//! Artifact writing, run manifests and covariate-only CSV input.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use sprvm::sprvm::ProprietyReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest(path: &Path) -> CliResult<FileDigest> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Provenance for one invocation. Timestamps live here and nowhere else so
/// that numeric outputs stay byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub propriety: Option<ProprietyReport>,
}

pub struct ManifestBuilder {
    command: &'static str,
    started_at: String,
    inputs: Vec<FileDigest>,
}

impl ManifestBuilder {
    /// Hashes inputs up front, before any work reads them.
    pub fn start(command: &'static str, inputs: &[&Path]) -> CliResult<Self> {
        Ok(ManifestBuilder {
            command,
            started_at: now(),
            inputs: inputs.iter().map(|p| digest(p)).collect::<CliResult<_>>()?,
        })
    }

    pub fn finish(
        self,
        path: &Path,
        config: impl Serialize,
        seeds: Vec<u64>,
        outputs: &[&Path],
        propriety: Option<ProprietyReport>,
    ) -> CliResult<()> {
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            command: self.command.to_owned(),
            argv: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: serde_json::to_value(config).map_err(|e| CliError::Data(e.to_string()))?,
            seeds,
            threads: rayon::current_num_threads(),
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| digest(p)).collect::<CliResult<_>>()?,
            started_at: self.started_at,
            finished_at: now(),
            propriety,
        };
        write_json(path, &manifest)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn io_err(path: &Path, source: std::io::Error) -> CliError {
    sprvm::Error::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Writes a header and rows of numbers, each printed in shortest
/// round-trip form.
pub fn write_matrix_csv(path: &Path, header: &[String], rows: &Array2<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_string_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads covariate rows for prediction. With `names`, columns are picked by
/// header label (extra columns such as a response are ignored); without,
/// every column is used in file order and there must be exactly `p`.
pub fn read_covariates(path: &Path, names: Option<&[String]>, p: usize) -> CliResult<Array2<f64>> {
    use sprvm::Error as E;
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| E::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let columns: Vec<usize> = match names {
        Some(names) => names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| CliError::Data(format!("{}: covariate column `{n}` not found", path.display())))
            })
            .collect::<CliResult<_>>()?,
        None => {
            if header.len() != p {
                return Err(E::DimensionMismatch {
                    expected: p,
                    found: header.len(),
                }
                .into());
            }
            (0..p).collect()
        }
    };
    let mut values = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| E::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(E::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            }
            .into());
        }
        for &c in &columns {
            let cell = &record[c];
            let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| E::ParseCell {
                row,
                column: header[c].clone(),
                value: cell.to_owned(),
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(E::Csv(format!("{} has no data rows", path.display())).into());
    }
    Ok(Array2::from_shape_vec((n, columns.len()), values).expect("row lengths checked"))
}
