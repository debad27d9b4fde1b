//! Similarity matrices as CSV: one comment header line, then one row of
//! comma-separated decimals per video. Values are printed with 17
//! significant digits so the f64 bit pattern survives the round trip.

use std::fs;
use std::path::Path;

use camoe_core::loss::SimilarityMatrix;
use camoe_core::Matrix;

use crate::error::{HarnessError, Result};
use crate::formats::util::atomic_write;

pub fn render_similarity_csv(m: &Matrix) -> String {
    let mut out = format!("# similarity rows=videos cols=texts shape={}x{}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_similarity_csv(path: &Path, m: &Matrix) -> Result<()> {
    atomic_write(path, render_similarity_csv(m).as_bytes())
}

/// Parse a similarity CSV into a validated square matrix.
pub fn read_similarity_csv(path: &Path) -> Result<SimilarityMatrix> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let fail = |offset: u64, detail: String| HarnessError::Format {
        path: path.to_path_buf(),
        offset,
        detail,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0u64;
    let mut saw_header = false;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        if trimmed.starts_with('#') {
            saw_header = true;
            offset += line.len() as u64 + 1;
            continue;
        }
        let mut row = Vec::new();
        let mut col_off = 0u64;
        for field in trimmed.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                fail(offset + col_off, format!("unparseable number {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(fail(offset + col_off, format!("non-finite value {v}")));
            }
            row.push(v);
            col_off += field.len() as u64 + 1;
        }
        rows.push(row);
        offset += line.len() as u64 + 1;
    }
    if !saw_header {
        return Err(fail(0, "missing '#' header line".into()));
    }
    if rows.is_empty() {
        return Err(fail(offset, "no data rows".into()));
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(fail(0, format!("matrix is not square: {n} rows but ragged columns")));
    }
    let matrix = Matrix::new(n, n, rows.concat())?;
    Ok(SimilarityMatrix::from_matrix(matrix)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_bits() {
        let m = Matrix::new(2, 2, vec![0.1, -0.99999999999999995, 1.0 / 3.0, 0.5]).unwrap();
        let dir = std::env::temp_dir().join("camoe-simcsv-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sim.csv");
        write_similarity_csv(&path, &m).unwrap();
        let back = read_similarity_csv(&path).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(m.get(i, j).to_bits(), back.get(i, j).to_bits());
            }
        }
        // writing again yields identical bytes
        let first = fs::read(&path).unwrap();
        write_similarity_csv(&path, back.matrix()).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn header_is_required() {
        let dir = std::env::temp_dir().join("camoe-simcsv-test-hdr");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sim.csv");
        fs::write(&path, "0.5,0.1\n0.1,0.5\n").unwrap();
        assert!(matches!(
            read_similarity_csv(&path),
            Err(HarnessError::Format { .. })
        ));
        fs::remove_dir_all(&dir).ok();
    }
}
