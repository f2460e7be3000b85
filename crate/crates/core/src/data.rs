//! Data containers, CSV ingestion and design standardization.
//!
//! A [`Dataset`] holds the raw response and covariates. [`standardize`]
//! centers every covariate column and records the root mean square of the
//! centered column, which is the weight of that coefficient in the weighted
//! ℓ1 penalty. Column means are kept so new covariate points are shifted the
//! same way before prediction.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Response vector plus a row-major design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<f64>,
    n: usize,
    p: usize,
    column_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from a response vector and row-major covariates.
    pub fn new(
        y: Vec<f64>,
        x: Vec<f64>,
        p: usize,
        column_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = y.len();
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        if p == 0 {
            return Err(DataError::NoCovariates);
        }
        if x.len() != n * p {
            return Err(DataError::Shape(format!(
                "design has {} entries, expected {n} x {p}",
                x.len()
            )));
        }
        if column_names.len() != p {
            return Err(DataError::Shape(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { row: i, col: 0 });
        }
        if let Some(idx) = x.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: idx / p,
                col: idx % p + 1,
            });
        }
        Ok(Self {
            y,
            x,
            n,
            p,
            column_names,
        })
    }

    /// Same as [`Dataset::new`] with generated names `x1..xp`.
    pub fn from_rows(y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self, DataError> {
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(y, x, p, names)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row-major design, `n * p` entries.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Sample mean of each covariate column.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.p];
        for row in self.x.chunks_exact(self.p) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= self.n as f64;
        }
        means
    }

    /// Keeps the rows listed in `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self, DataError> {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let mut x = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            x.extend_from_slice(self.row(i));
        }
        Self::new(y, x, self.p, self.column_names.clone())
    }

    /// Writes the dataset as CSV with the response first, 17 significant digits.
    pub fn write_csv(&self, path: &Path, response_column: &str) -> Result<(), DataError> {
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        let mut header = vec![response_column.to_string()];
        header.extend(self.column_names.iter().cloned());
        writeln!(out, "{}", header.join(",")).map_err(io_err)?;
        for i in 0..self.n {
            let mut line = fmt_f64(self.y[i]);
            for v in self.row(i) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Loads a dataset from a headered CSV file.
///
/// `response_column` becomes `y`; every other column becomes a covariate in
/// header order.
pub fn load_csv(path: &Path, response_column: &str) -> Result<Dataset, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, response_column)
}

/// Reader-based variant of [`load_csv`].
pub fn read_csv<R: std::io::Read>(reader: R, response_column: &str) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let resp = header
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| DataError::MissingColumn(response_column.to_string()))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != resp)
        .map(|(_, h)| h.clone())
        .collect();
    let p = names.len();
    if p == 0 {
        return Err(DataError::NoCovariates);
    }

    let mut y = Vec::new();
    let mut x = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // data rows are numbered from 1; the header is row 0
        let row = r + 1;
        for (j, cell) in record.iter().enumerate() {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::BadCell {
                    row,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
            if j == resp {
                y.push(value);
            } else {
                x.push(value);
            }
        }
    }
    if y.len() < 2 {
        return Err(DataError::TooFewRows(y.len()));
    }
    Dataset::new(y, x, p, names)
}

/// Loads the named covariate columns from a headered CSV file, in the order
/// given. Other columns (a response, row labels) are ignored.
pub fn load_covariates(path: &Path, columns: &[String]) -> Result<Vec<f64>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_covariates(file, columns)
}

/// Reader-based variant of [`load_covariates`]; returns a row-major matrix.
pub fn read_covariates<R: std::io::Read>(
    reader: R,
    columns: &[String],
) -> Result<Vec<f64>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| DataError::MissingColumn(c.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut x = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        for &j in &idx {
            let cell = record.get(j).unwrap_or("");
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::BadCell {
                    row: r + 1,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
            x.push(value);
        }
    }
    Ok(x)
}

/// Column-centered design with per-column penalty weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedDesign {
    /// Centered design, row-major `n * p`.
    xc: Vec<f64>,
    n: usize,
    p: usize,
    col_means: Vec<f64>,
    /// Root mean square of each centered column.
    sigma_hat: Vec<f64>,
    constant: Vec<bool>,
}

impl StandardizedDesign {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn xc(&self) -> &[f64] {
        &self.xc
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.xc[i * self.p..(i + 1) * self.p]
    }

    pub fn col_means(&self) -> &[f64] {
        &self.col_means
    }

    pub fn sigma_hat(&self) -> &[f64] {
        &self.sigma_hat
    }

    /// `true` for columns with a single repeated value.
    pub fn constant_columns(&self) -> &[bool] {
        &self.constant
    }

    /// Indices of the columns that take part in fitting.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| !self.constant[j]).collect()
    }

    /// Shifts a raw covariate point by the stored column means.
    pub fn center_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col_means).map(|(v, m)| v - m).collect()
    }

    /// Keeps the centering and weights but replaces the rows. Used when a
    /// model fitted on one design has to be evaluated on held-out data.
    pub fn with_rows(&self, rows: &[usize]) -> Self {
        let mut xc = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            xc.extend_from_slice(self.row(i));
        }
        Self {
            xc,
            n: rows.len(),
            p: self.p,
            col_means: self.col_means.clone(),
            sigma_hat: self.sigma_hat.clone(),
            constant: self.constant.clone(),
        }
    }
}

/// Centers each covariate column and computes its penalty weight.
///
/// Constant columns become exact zeros with weight 0 and are flagged; the
/// solvers pin their coefficients to 0.
pub fn standardize(d: &Dataset) -> StandardizedDesign {
    let (n, p) = (d.n(), d.p());
    let col_means = d.column_means();
    let constant: Vec<bool> = (0..p)
        .map(|j| {
            let first = d.x()[j];
            (0..n).all(|i| d.x()[i * p + j] == first)
        })
        .collect();
    let mut xc = Vec::with_capacity(n * p);
    for row in d.x().chunks_exact(p) {
        for j in 0..p {
            xc.push(if constant[j] {
                0.0
            } else {
                row[j] - col_means[j]
            });
        }
    }
    let mut sumsq = vec![0.0; p];
    for row in xc.chunks_exact(p) {
        for (s, v) in sumsq.iter_mut().zip(row) {
            *s += v * v;
        }
    }
    let sigma_hat = sumsq.iter().map(|s| (s / n as f64).sqrt()).collect();
    let col_means = col_means
        .into_iter()
        .zip(&constant)
        .enumerate()
        .map(|(j, (m, &c))| if c { d.x()[j] } else { m })
        .collect();
    StandardizedDesign {
        xc,
        n,
        p,
        col_means,
        sigma_hat,
        constant,
    }
}
