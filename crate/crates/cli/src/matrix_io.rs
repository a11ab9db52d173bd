//! Dense CSV matrices: one row per line, comma separated, no header.

use std::fs;
use std::path::Path;

use glht::error::{Error, Result};
use nalgebra::DMatrix;

pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                let v: f64 = t
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("{origin}: line {}: bad number {:?}", i + 1, t.trim())))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Parse(format!("{origin}: line {}: non-finite entry", i + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Shape(format!(
                    "{origin}: line {} has {} columns, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Shape(format!("{origin}: empty matrix")));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text, &path.display().to_string())
}

#[cfg(test)]
pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let m = parse_matrix("1,2,3\n\n4, 5 ,6\n", "m").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn rejects_ragged_and_garbage() {
        assert!(matches!(parse_matrix("1,2\n3\n", "m"), Err(Error::Shape(_))));
        assert!(matches!(parse_matrix("1,x\n", "m"), Err(Error::Parse(_))));
        assert!(matches!(parse_matrix("1,nan\n", "m"), Err(Error::Parse(_))));
        assert!(matches!(parse_matrix("\n", "m"), Err(Error::Shape(_))));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -2.5, 1e-300, 3.0]);
        write_matrix(&m, &path).unwrap();
        assert_eq!(load_matrix(&path).unwrap(), m);
    }
}
