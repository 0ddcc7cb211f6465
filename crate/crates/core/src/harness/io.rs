//! Matrix and vector files: header-free row-major CSV and the JSON envelope
//! `{"dim": d, "entries": [[...], ...]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixEnvelope {
    pub dim: usize,
    pub entries: Vec<Vec<f64>>,
}

impl MatrixEnvelope {
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            dim: m.nrows(),
            entries: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn into_matrix(self) -> Result<Matrix> {
        if self.entries.len() != self.dim || self.entries.iter().any(|r| r.len() != self.dim) {
            return Err(Error::Dimension(format!("envelope entries are not {0}x{0}", self.dim)));
        }
        Ok(Matrix::from_fn(self.dim, self.dim, |i, j| self.entries[i][j]))
    }
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Dimension(format!("row {i} has {} fields, expected {ncols}", r.len())));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Numeric CSV. A first row that does not parse as numbers is taken as a
/// header and returned separately.
pub fn parse_csv<R: Read>(reader: R) -> Result<(Option<Vec<String>>, Matrix)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => header = Some(record.iter().map(str::to_string).collect()),
            Err(e) => {
                return Err(Error::Domain(format!("line {}: {e}", line + 1)));
            }
        }
    }
    Ok((header, rows_to_matrix(rows)?))
}

pub fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    Ok(parse_csv(File::open(path)?)?.1)
}

pub fn write_csv_matrix(path: &Path, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        wtr.write_record(h)?;
    }
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// A vector stored as one column or one row.
pub fn read_csv_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_csv_matrix(path)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(m.iter().copied().collect())
    } else {
        Err(Error::Dimension(format!(
            "expected a single row or column, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn write_csv_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut f = File::create(path)?;
    for x in v {
        writeln!(f, "{x:e}")?;
    }
    Ok(())
}

pub fn read_json_matrix(path: &Path) -> Result<Matrix> {
    let env: MatrixEnvelope = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    env.into_matrix()
}

pub fn write_json_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let f = File::create(path)?;
    serde_json::to_writer_pretty(f, &MatrixEnvelope::from_matrix(m))?;
    Ok(())
}

/// CSV or JSON envelope, chosen by extension.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_json_matrix(path),
        _ => read_csv_matrix(path),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut f, item)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection() {
        let (h, m) = parse_csv("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(h.unwrap(), vec!["a", "b"]);
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let (h, m) = parse_csv("1,2\n".as_bytes()).unwrap();
        assert!(h.is_none());
        assert_eq!(m.ncols(), 2);
    }

    #[test]
    fn ragged_rows_fail() {
        assert!(parse_csv("1,2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn envelope_roundtrip() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let json = serde_json::to_string(&MatrixEnvelope::from_matrix(&m)).unwrap();
        assert_eq!(json, r#"{"dim":2,"entries":[[1.0,0.5],[0.5,1.0]]}"#);
        let back: MatrixEnvelope = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_matrix().unwrap(), m);
    }
}
