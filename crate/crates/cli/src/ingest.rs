//! CSV ingestion of observation matrices and the covariance/correlation
//! targets built from them.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use tracereg::error::{Error, Result};
use tracereg::symmat::SymMat;

/// An `N x m` matrix of observation rows read from disk.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    pub rows: DMatrix<f64>,
    pub source: PathBuf,
    pub standardized: bool,
}

impl DataMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    /// Subtract the column means in place.
    pub fn center(&mut self) {
        let n = self.rows.nrows() as f64;
        for c in 0..self.rows.ncols() {
            let mean = self.rows.column(c).sum() / n;
            for r in 0..self.rows.nrows() {
                self.rows[(r, c)] -= mean;
            }
        }
    }

    /// Center and rescale every column to unit variance. Fails on constant
    /// columns, naming the offender.
    pub fn standardize(&mut self) -> Result<()> {
        self.center();
        let n = self.rows.nrows() as f64;
        for c in 0..self.rows.ncols() {
            let var = self.rows.column(c).norm_squared() / n;
            if var <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "column {} has zero variance, cannot standardize",
                    c + 1
                )));
            }
            let sd = var.sqrt();
            for r in 0..self.rows.nrows() {
                self.rows[(r, c)] /= sd;
            }
        }
        self.standardized = true;
        Ok(())
    }
}

/// Parse a rectangular numeric CSV. A single leading header row is detected
/// by its first cell failing to parse as a number. Decimal separators are
/// dots regardless of locale. Errors carry 1-based file coordinates.
pub fn ingest_csv(path: &Path) -> Result<DataMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut header_allowed = true;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if header_allowed {
            header_allowed = false;
            let looks_like_header = cells.iter().any(|c| c.parse::<f64>().is_err());
            if looks_like_header {
                width = Some(cells.len());
                continue;
            }
        }
        if let Some(w) = width {
            if cells.len() != w {
                return Err(Error::InvalidInput(format!(
                    "ragged row at line {}: expected {} fields, found {}",
                    lineno + 1,
                    w,
                    cells.len()
                )));
            }
        } else {
            width = Some(cells.len());
        }
        let mut parsed = Vec::with_capacity(cells.len());
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "non-numeric cell `{cell}` at row {}, column {}",
                    lineno + 1,
                    col + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite cell at row {}, column {}",
                    lineno + 1,
                    col + 1
                )));
            }
            parsed.push(value);
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} holds no data rows",
            path.display()
        )));
    }
    let n = rows.len();
    let m = rows[0].len();
    let data = DMatrix::from_fn(n, m, |r, c| rows[r][c]);
    Ok(DataMatrix {
        rows: data,
        source: path.to_path_buf(),
        standardized: false,
    })
}

/// Target built from ingested data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    Covariance,
    Correlation,
}

/// Sample covariance `(1/N) sum (z - mean)(z - mean)^T`, optionally
/// rescaled to unit diagonal. Correlation needs at least two rows and
/// rejects zero-variance columns by name.
pub fn sample_covariance(data: &DataMatrix, mode: CovarianceMode) -> Result<SymMat> {
    let n = data.n_rows();
    let m = data.n_cols();
    if mode == CovarianceMode::Correlation && n < 2 {
        return Err(Error::InvalidInput(
            "correlation needs at least two rows".to_string(),
        ));
    }
    let mut means = vec![0.0; m];
    for c in 0..m {
        means[c] = data.rows.column(c).sum() / n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        let centered = data.rows.row(i).transpose() - DMatrix::from_fn(m, 1, |r, _| means[r]);
        cov += &centered * centered.transpose();
    }
    cov /= n as f64;
    if mode == CovarianceMode::Correlation {
        let mut scale = vec![0.0; m];
        for c in 0..m {
            let var = cov[(c, c)];
            if var <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "column {} has zero variance, correlation undefined",
                    c + 1
                )));
            }
            scale[c] = 1.0 / var.sqrt();
        }
        for r in 0..m {
            for c in 0..m {
                cov[(r, c)] *= scale[r] * scale[c];
            }
        }
    }
    SymMat::new(cov)
}
