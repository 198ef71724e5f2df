//! Plain-text matrix and time-series files.
//!
//! Matrices are written with the shortest decimal representation that
//! parses back to the identical `f64`, so a write/read cycle is lossless.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::TimeSeriesTable;

pub fn format_matrix(m: &Array2<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

fn parse_row(path: &Path, lineno: usize, line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                Error::format(
                    path,
                    format!("line {}: bad number {:?}", lineno + 1, tok.trim()),
                )
            })
        })
        .collect()
}

fn rows_to_array(path: &Path, rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::format(
            path,
            format!("row {} has inconsistent length", i + 1),
        ));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, m), flat).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads an M×M matrix CSV without header.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_row(path, i, l))
        .collect::<Result<Vec<_>>>()?;
    let a = rows_to_array(path, rows)?;
    if a.nrows() != a.ncols() {
        return Err(Error::format(
            path,
            format!("matrix is {}x{}, expected square", a.nrows(), a.ncols()),
        ));
    }
    Ok(a)
}

/// Reads a T×M time-series CSV. A first line whose first token is not
/// numeric is taken as the ROI-name header.
pub fn read_timeseries_csv(path: &Path) -> Result<TimeSeriesTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let mut roi_names = None;
    if let Some((_, first)) = lines.peek() {
        let tok = first.split(',').next().unwrap_or("").trim();
        if tok.parse::<f64>().is_err() {
            roi_names = Some(
                first
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .collect::<Vec<_>>(),
            );
            lines.next();
        }
    }
    let rows = lines
        .map(|(i, l)| parse_row(path, i, l))
        .collect::<Result<Vec<_>>>()?;
    let values = rows_to_array(path, rows)?;
    if let Some(names) = &roi_names {
        if names.len() != values.ncols() && values.nrows() > 0 {
            return Err(Error::format(
                path,
                "header length differs from column count",
            ));
        }
    }
    Ok(TimeSeriesTable { values, roi_names })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = array![
            [1.0, 0.1 + 0.2, -1e-9],
            [0.30000000000000004, 1.0, 2.5e-300],
            [-0.0, 1.0 / 3.0, 1.0]
        ];
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), m);
    }

    #[test]
    fn timeseries_header_detection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        fs::write(&p, "A,B\n1,2\n3,4\n5,7\n").unwrap();
        let t = read_timeseries_csv(&p).unwrap();
        assert_eq!(t.roi_names, Some(vec!["A".to_string(), "B".to_string()]));
        assert_eq!(t.values.dim(), (3, 2));

        fs::write(&p, "1,2\n3,4\n5,7\n").unwrap();
        let t = read_timeseries_csv(&p).unwrap();
        assert!(t.roi_names.is_none());
        assert_eq!(t.values[[2, 1]], 7.0);
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Format { .. })));
        fs::write(&p, "1,x\n3,4\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Format { .. })));
        fs::write(&p, "1,2,3\n3,4,5\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Format { .. })));
        assert!(matches!(
            read_matrix_csv(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
