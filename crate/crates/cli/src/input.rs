//! CSV ingestion and the column mapping onto subject records.

use std::fs;
use std::path::Path;

use censcov::{Dataset, Error, SubjectRecord};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A CSV file read fully into memory.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub columns: Vec<String>,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let sha256 = sha256_hex(&bytes);
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(bytes.as_slice());
        let headers = reader
            .headers()
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        Ok(Self {
            headers,
            rows,
            sha256,
        })
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            rows: self.rows.len(),
            columns: self.headers.clone(),
            sha256: self.sha256.clone(),
        }
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::from(Error::MissingColumn(name.to_string())))
    }

    /// Parses column `name` as finite reals. Line numbers count the header
    /// as line 1.
    pub fn reals(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let k = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = &row[k];
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(CliError::parse(format!(
                        "line {}: column `{name}` has non-numeric value `{cell}`",
                        i + 2
                    ))),
                }
            })
            .collect()
    }

    pub fn flags(&self, name: &str) -> Result<Vec<u8>, CliError> {
        let k = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| match &row[k] {
                "0" => Ok(0),
                "1" => Ok(1),
                cell => Err(CliError::parse(format!(
                    "line {}: column `{name}` must be 0 or 1, got `{cell}`",
                    i + 2
                ))),
            })
            .collect()
    }
}

/// Column names of the outcome, the censored covariate, and the fully
/// observed covariates. The treatment column, when given, is appended to
/// the covariates.
#[derive(Debug, Clone, Serialize)]
pub struct Schema {
    pub time: String,
    pub status: String,
    pub cov_time: String,
    pub cov_status: String,
    pub covariates: Vec<String>,
    pub treatment: Option<String>,
}

impl Schema {
    pub fn x_columns(&self) -> Vec<String> {
        self.covariates
            .iter()
            .cloned()
            .chain(self.treatment.clone())
            .collect()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        std::iter::once(self.cov_time.clone())
            .chain(self.x_columns())
            .collect()
    }

    pub fn dataset(&self, table: &Table) -> Result<Dataset, CliError> {
        let y = table.reals(&self.time)?;
        let delta = table.flags(&self.status)?;
        let z = table.reals(&self.cov_time)?;
        let eta = table.flags(&self.cov_status)?;
        let x = self
            .x_columns()
            .iter()
            .map(|c| table.reals(c))
            .collect::<Result<Vec<_>, _>>()?;
        let records = (0..table.rows.len())
            .map(|i| {
                SubjectRecord::new(
                    y[i],
                    delta[i],
                    z[i],
                    eta[i],
                    x.iter().map(|col| col[i]).collect(),
                )
            })
            .collect();
        Dataset::new(records).map_err(|e| {
            let err = CliError::from(e.clone());
            match e {
                Error::NegativeTime { index, .. } | Error::NonFinite { index, .. } => CliError {
                    message: format!("line {}: {}", index + 2, err.message),
                    ..err
                },
                _ => err,
            }
        })
    }
}
