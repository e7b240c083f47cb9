//! On-disk formats.
//!
//! Matrices are stored either as CSV (one row per line) or in a small binary
//! layout: the 8-byte magic `SENSMAT\0`, the row and column counts as
//! little-endian `u32`, then the entries as little-endian `f64` in row-major
//! order. Priors and design problems are JSON with row-major covariances.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use priorsense_core::design::DesignProblem;
use priorsense_core::prior::{CovarianceMatrix, MixtureComponent, MixturePrior};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

pub const MATRIX_MAGIC: [u8; 8] = *b"SENSMAT\0";

pub fn write_matrix_bin(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let rows = u32::try_from(m.nrows()).map_err(|_| config_err!("matrix too tall for the binary format"))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| config_err!("matrix too wide for the binary format"))?;
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    let mut buf = Vec::with_capacity(16 + 8 * m.len());
    buf.extend_from_slice(&MATRIX_MAGIC);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(ctx(), e))
}

pub fn read_matrix_bin(path: &Path) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() < 16 || bytes[..8] != MATRIX_MAGIC {
        return Err(Error::format(path, "missing SENSMAT header"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(16))
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(path, format!("expected {expected} bytes for {rows}x{cols}, found {}", bytes.len())));
    }
    let data: Vec<f64> = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])))
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::format(path, format!("row {rows} has {} entries", rec.len())));
        }
        for field in rec.iter() {
            data.push(field.parse::<f64>().map_err(|e| Error::format(path, format!("row {rows}: {e}")))?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &data))
}

/// Reads either format, chosen by extension (`.csv` or anything else as binary).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_matrix_csv(path),
        _ => read_matrix_bin(path),
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("accessing {}", path.display()), io),
        other => Error::format(path, format!("{other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentFile {
    pub weight: f64,
    /// Row-major `dim × dim` entries.
    pub cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    pub dim: usize,
    pub components: Vec<ComponentFile>,
}

impl PriorFile {
    pub fn from_prior(prior: &MixturePrior) -> Self {
        Self {
            dim: prior.dim(),
            components: prior
                .components()
                .iter()
                .map(|c| ComponentFile { weight: c.weight, cov: c.cov.to_row_major() })
                .collect(),
        }
    }

    pub fn to_prior(&self) -> Result<MixturePrior> {
        let components = self
            .components
            .iter()
            .map(|c| Ok(MixtureComponent { weight: c.weight, cov: CovarianceMatrix::from_row_slice(self.dim, &c.cov)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(MixturePrior::new(components)?)
    }
}

/// A design problem given directly by its two covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dim: usize,
    pub m: usize,
    pub alpha_sq: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Relative to the mean eigenvalue of `Σx + Σc`.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    pub sigma_x: Vec<f64>,
    pub sigma_c: Vec<f64>,
}

fn default_iterations() -> usize {
    DesignProblem::DEFAULT_ITERATIONS
}

fn default_ridge() -> f64 {
    1e-10
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| config_err!("{}: {e}", path.display()))
    }

    pub fn to_problem(&self) -> Result<DesignProblem> {
        let sx = CovarianceMatrix::from_row_slice(self.dim, &self.sigma_x)?;
        let sc = CovarianceMatrix::from_row_slice(self.dim, &self.sigma_c)?;
        let ridge = self.ridge * sx.add(&sc)?.trace() / self.dim.max(1) as f64;
        Ok(DesignProblem::new(sx, sc, self.m, self.alpha_sq)?
            .with_iterations(self.iterations)
            .with_ridge(ridge))
    }
}
