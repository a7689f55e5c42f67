//! Reading and writing point sets and dense matrices.
//!
//! CSV files hold one row per line with no header. JSON files hold
//! `{"points": [[x, y], ...]}` or `{"matrix": [[...], ...]}`. The format is
//! picked from the file extension (`.json`, anything else is CSV).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{FrgmError, Result};
use crate::graph::PointSet;

#[derive(Deserialize)]
struct PointsDoc {
    points: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct MatrixDoc {
    matrix: Vec<Vec<f64>>,
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(FrgmError::Input(format!("{what} is empty")));
    }
    let ncols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(FrgmError::Input(format!(
            "{what}: row {i} has {} values, expected {ncols}",
            r.len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(FrgmError::Input(format!("{what} contains non-finite values")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parses headerless CSV text into rows of numbers.
pub fn parse_csv_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FrgmError::Input(format!("CSV line {}: {e}", line + 1)))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| FrgmError::Input(format!("CSV line {}: not a number: {f:?}", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Shortest decimal that parses back to exactly `x` (at most 17
/// significant digits). Exponent form outside `[1e-5, 1e17)`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if (1e-5..1e17).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Headerless CSV text with round-trip numbers.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in m.row_iter() {
        let line: Vec<String> = r.iter().map(|x| format_number(*x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| FrgmError::Input(format!("cannot read {}: {e}", path.display())))?;
    let what = path.display().to_string();
    if is_json(path) {
        let doc: MatrixDoc = serde_json::from_str(&text).map_err(|e| FrgmError::Input(format!("{what}: {e}")))?;
        rows_to_matrix(doc.matrix, &what)
    } else {
        rows_to_matrix(parse_csv_rows(&text)?, &what)
    }
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointSet<f64>> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| FrgmError::Input(format!("cannot read {}: {e}", path.display())))?;
    let what = path.display().to_string();
    let rows = if is_json(path) {
        let doc: PointsDoc = serde_json::from_str(&text).map_err(|e| FrgmError::Input(format!("{what}: {e}")))?;
        doc.points
    } else {
        parse_csv_rows(&text)?
    };
    PointSet::new(rows_to_matrix(rows, &what)?).map_err(|e| FrgmError::Input(format!("{what}: {e}")))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let text = if is_json(path) {
        json_document("matrix", m)
    } else {
        matrix_to_csv(m)
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn write_points(path: impl AsRef<Path>, v: &PointSet<f64>) -> Result<()> {
    let path = path.as_ref();
    let text = if is_json(path) {
        json_document("points", v.matrix())
    } else {
        matrix_to_csv(v.matrix())
    };
    fs::write(path, text)?;
    Ok(())
}

/// `{"<key>": [[...], ...]}` with round-trip numbers.
pub fn json_document(key: &str, m: &DMatrix<f64>) -> String {
    format!("{{\"{key}\":{}}}\n", json_rows(m))
}

/// Nested JSON array of the rows of `m`.
pub fn json_rows(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = matrix_to_rows(m)
        .iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter().map(|x| format_number(*x)).collect::<Vec<_>>().join(",")
            )
        })
        .collect();
    format!("[{}]", rows.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            1e22,
            123456.0,
            std::f64::consts::PI,
            -0.0,
            5e-324,
        ] {
            let s = format_number(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(3.0), "3");
    }

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[0.1, 2.0, -3.5, 1e-9, 1.0 / 7.0, 8.0]);
        for name in ["m.csv", "m.json"] {
            let p = dir.path().join(name);
            write_matrix(&p, &m).unwrap();
            assert_eq!(read_matrix(&p).unwrap(), m);
        }
        let v = PointSet::new(DMatrix::from_row_slice(2, 2, &[0.25, -1.0, 3.0, 1.0 / 3.0])).unwrap();
        for name in ["v.csv", "v.json"] {
            let p = dir.path().join(name);
            write_points(&p, &v).unwrap();
            assert_eq!(read_points(&p).unwrap(), v);
        }
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(parse_csv_rows("1,2\n3,x\n").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ragged.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(FrgmError::Input(_))));
        let p = dir.path().join("line.csv");
        fs::write(&p, "1\n2\n").unwrap();
        assert!(matches!(read_points(&p), Err(FrgmError::Input(_))));
        assert!(matches!(
            read_points(dir.path().join("missing.csv")),
            Err(FrgmError::Input(_))
        ));
        let p = dir.path().join("bad.json");
        fs::write(&p, "{\"points\": 3}").unwrap();
        assert!(read_points(&p).is_err());
    }
}
