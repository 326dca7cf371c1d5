//! Binary container for dense square f64 matrices.
//!
//! Layout: 4-byte magic `LAEM`, `n` as little-endian u64, a one-byte dtype
//! tag (`1` = f64), then the `n*n` row-major little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LAEM";
const DTYPE_F64: u8 = 1;

/// Sanity bound against corrupt headers; 1e6 items would be an 8 TB payload.
const MAX_N: u64 = 1_000_000;

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    assert_eq!(m.nrows(), m.ncols(), "container stores square matrices");
    let n = m.nrows();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&[DTYPE_F64]).map_err(io_err)?;
    for i in 0..n {
        for j in 0..n {
            w.write_all(&m[(i, j)].to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |message: String| Error::BadContainer {
        path: path.into(),
        message,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| bad(format!("truncated header: {e}")))?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let mut n_bytes = [0u8; 8];
    r.read_exact(&mut n_bytes)
        .map_err(|e| bad(format!("truncated header: {e}")))?;
    let n = u64::from_le_bytes(n_bytes);
    if n > MAX_N {
        return Err(bad(format!("implausible dimension {n}")));
    }
    let n = n as usize;
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)
        .map_err(|e| bad(format!("truncated header: {e}")))?;
    if dtype[0] != DTYPE_F64 {
        return Err(bad(format!("unsupported dtype tag {}", dtype[0])));
    }

    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut buf = [0u8; 8];
    for i in 0..n {
        for j in 0..n {
            r.read_exact(&mut buf)
                .map_err(|e| bad(format!("truncated payload at ({i}, {j}): {e}")))?;
            m[(i, j)] = f64::from_le_bytes(buf);
        }
    }
    if r.read(&mut buf).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes after payload".into()));
    }
    Ok(m)
}

/// Plain CSV dump for inspection, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                write!(w, ",").map_err(|e| Error::io(path, e))?;
            }
            write!(w, "{}", m[(i, j)]).map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = DMatrix::from_fn(7, 7, |i, j| (i as f64 - 2.5) * 0.37 + j as f64 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_matrix(&path, &m).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), m);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_matrix(&path), Err(Error::BadContainer { .. })));
    }

    #[test]
    fn rejects_truncated_payload() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_matrix(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_matrix(&path), Err(Error::BadContainer { .. })));
    }

    #[test]
    fn csv_export_writes_rows() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.5, 4.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "1,2\n3.5,4\n");
    }
}
