//! Regression datasets: construction, validation, CSV ingestion.

use crate::error::Error;
use crate::linalg;
use crate::Result;
use ndarray::{Array1, Array2};
use std::path::Path;

/// Relative singular-value tolerance below which a design column counts as
/// linearly dependent on the others.
pub const RANK_RTOL: f64 = 1e-10;

/// A fixed design regression dataset: response vector `y` and full column
/// rank design matrix `x` (n rows, k columns, n ≥ k ≥ 1).
///
/// Construction validates dimensions, finiteness, and numerical rank, so
/// every downstream solver can assume a well-posed problem.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Array1<f64>,
    x: Array2<f64>,
    column_names: Vec<String>,
    max_abs_x: f64,
}

impl Dataset {
    /// Build a dataset, validating shape, finiteness, and column rank.
    pub fn new(y: Array1<f64>, x: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        let (n, k) = x.dim();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "response length vs design rows",
                expected: n,
                got: y.len(),
            });
        }
        if k == 0 || n < k {
            return Err(Error::InvalidArgument(format!(
                "need n >= k >= 1 observations, got n = {n}, k = {k}"
            )));
        }
        if column_names.len() != k {
            return Err(Error::DimensionMismatch {
                context: "column name count vs design columns",
                expected: k,
                got: column_names.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "response and design entries must be finite".to_string(),
            ));
        }
        let sv = linalg::singular_values(&x.view());
        let ratio = sv[k - 1] / sv[0];
        if !(ratio > RANK_RTOL) {
            let column = linalg::first_dependent_column(&x.view(), RANK_RTOL).unwrap_or(k - 1);
            return Err(Error::RankDeficient { column, ratio });
        }
        Ok(Self::from_parts_unchecked(y, x, column_names))
    }

    /// Build a dataset skipping validation.  For internal resampling paths
    /// where the source dataset has already been validated; a rank-degenerate
    /// resample surfaces later as a solver convergence failure.
    pub(crate) fn from_parts_unchecked(
        y: Array1<f64>,
        x: Array2<f64>,
        column_names: Vec<String>,
    ) -> Self {
        let max_abs_x = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        Dataset {
            y,
            x,
            column_names,
            max_abs_x,
        }
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of design columns (regression coefficients).
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// Response vector.
    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    /// Design matrix.
    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    /// Design column names, in design order.
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Largest absolute design entry.
    pub fn max_abs_x(&self) -> f64 {
        self.max_abs_x
    }

    /// Finite-sample bound `k · max|x_ij| / n` that the sup-norm of the
    /// moment vector satisfies at any exact solution.
    pub fn moment_bound(&self) -> f64 {
        self.k() as f64 * self.max_abs_x / self.n() as f64
    }

    /// Residual vector `y - X β`.
    pub fn residuals(&self, beta: &Array1<f64>) -> Array1<f64> {
        let mut r = self.x.dot(beta);
        r.zip_mut_with(&self.y, |fitted, &yi| *fitted = yi - *fitted);
        r
    }

    /// New dataset holding rows `indices` (with repetition allowed), in
    /// order.  Used by the resampling bootstrap; skips the rank check.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        let k = self.k();
        let mut y = Array1::<f64>::zeros(indices.len());
        let mut x = Array2::<f64>::zeros((indices.len(), k));
        for (row, &i) in indices.iter().enumerate() {
            y[row] = self.y[i];
            x.row_mut(row).assign(&self.x.row(i));
        }
        Dataset::from_parts_unchecked(y, x, self.column_names.clone())
    }
}

/// Load a dataset from a headered CSV file of numeric columns.
///
/// `response` names the response column; every other column becomes a
/// covariate in file order.  When `intercept` is set (the usual case) a
/// constant column named `intercept` is prepended to the design.
pub fn load_csv(path: &Path, response: &str, intercept: bool) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: display.clone(),
                source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
            },
            _ => Error::ParseError {
                path: display.clone(),
                reason: e.to_string(),
            },
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ParseError {
            path: display.clone(),
            reason: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let response_idx = headers.iter().position(|h| h == response).ok_or_else(|| {
        Error::ParseError {
            path: display.clone(),
            reason: format!(
                "response column {response:?} not found (columns: {})",
                headers.join(", ")
            ),
        }
    })?;

    let mut y = Vec::<f64>::new();
    let mut covariates: Vec<Vec<f64>> = vec![Vec::new(); headers.len() - 1];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::ParseError {
            path: display.clone(),
            reason: format!("data row {}: {e}", row_idx + 1),
        })?;
        if record.len() != headers.len() {
            return Err(Error::ParseError {
                path: display.clone(),
                reason: format!(
                    "data row {}: expected {} fields, found {}",
                    row_idx + 1,
                    headers.len(),
                    record.len()
                ),
            });
        }
        let mut col_slot = 0;
        for (field_idx, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::ParseError {
                path: display.clone(),
                reason: format!(
                    "data row {}, column {:?}: cannot parse {field:?} as a number",
                    row_idx + 1,
                    headers[field_idx]
                ),
            })?;
            if field_idx == response_idx {
                y.push(value);
            } else {
                covariates[col_slot].push(value);
                col_slot += 1;
            }
        }
    }

    let n = y.len();
    if n == 0 {
        return Err(Error::ParseError {
            path: display,
            reason: "file contains a header but no data rows".to_string(),
        });
    }
    let k_file = covariates.len();
    let k = k_file + usize::from(intercept);
    let mut x = Array2::<f64>::zeros((n, k));
    let mut names = Vec::with_capacity(k);
    let mut col = 0;
    if intercept {
        x.column_mut(0).fill(1.0);
        names.push("intercept".to_string());
        col = 1;
    }
    for (j, header) in headers.iter().enumerate() {
        if j == response_idx {
            continue;
        }
        let source = &covariates[names.len() - usize::from(intercept)];
        for (i, &v) in source.iter().enumerate() {
            x[[i, col]] = v;
        }
        names.push(header.clone());
        col += 1;
    }
    Dataset::new(Array1::from(y), x, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_csv_with_intercept() {
        let f = write_temp("wage,educ,exper\n10.5,12,4\n12.0,16,2\n9.25,10,8\n");
        let ds = load_csv(f.path(), "wage", true).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.k(), 3);
        assert_eq!(ds.column_names(), &["intercept", "educ", "exper"]);
        assert_eq!(ds.y()[1], 12.0);
        assert_eq!(ds.x()[[0, 0]], 1.0);
        assert_eq!(ds.x()[[2, 1]], 10.0);
        assert_eq!(ds.x()[[2, 2]], 8.0);
    }

    #[test]
    fn duplicated_column_is_rank_error() {
        let f = write_temp("y,a,b\n1,2,2\n2,3,3\n3,5,5\n4,7,7\n");
        match load_csv(f.path(), "y", true) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 2),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = write_temp("y,a\n1,2\n2,NA\n3,4\n");
        match load_csv(f.path(), "y", true) {
            Err(Error::ParseError { reason, .. }) => {
                assert!(reason.contains("row 2"), "reason: {reason}");
                assert!(reason.contains('a'), "reason: {reason}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/definitely/not/here.csv"), "y", true).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_response_column_is_reported() {
        let f = write_temp("y,a\n1,2\n");
        let err = load_csv(f.path(), "wage", true).unwrap_err();
        assert!(err.to_string().contains("wage"));
    }

    #[test]
    fn dataset_rejects_dimension_mismatch() {
        let y = array![1.0, 2.0];
        let x = array![[1.0], [1.0], [1.0]];
        assert!(Dataset::new(y, x, vec!["c".into()]).is_err());
    }

    #[test]
    fn dataset_rejects_non_finite() {
        let y = array![1.0, f64::NAN, 3.0];
        let x = array![[1.0], [1.0], [1.0]];
        assert!(Dataset::new(y, x, vec!["c".into()]).is_err());
    }

    #[test]
    fn resample_gathers_rows() {
        let y = array![1.0, 2.0, 3.0];
        let x = array![[1.0, 0.5], [1.0, -0.25], [1.0, 2.0]];
        let ds = Dataset::new(y, x, vec!["intercept".into(), "x".into()]).unwrap();
        let rs = ds.resample(&[2, 2, 0]);
        assert_eq!(rs.y().as_slice().unwrap(), &[3.0, 3.0, 1.0]);
        assert_eq!(rs.x()[[0, 1]], 2.0);
        assert_eq!(rs.x()[[2, 1]], 0.5);
    }

    #[test]
    fn moment_bound_formula() {
        let y = array![1.0, 2.0, 3.0, 4.0];
        let x = array![[1.0, -5.0], [1.0, 2.0], [1.0, 0.0], [1.0, 3.0]];
        let ds = Dataset::new(y, x, vec!["intercept".into(), "x".into()]).unwrap();
        assert_eq!(ds.moment_bound(), 2.0 * 5.0 / 4.0);
    }
}
