//! Density-matrix serialization.
//!
//! Binary layout, all little-endian: `u64` rows, `u64` columns, then the
//! entries in row-major order as `(re: f64, im: f64)` pairs.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DensityMatrix, C64};
use crate::error::{Error, Result};

pub fn write_density(mut w: impl Write, rho: &DensityMatrix) -> Result<()> {
    let d = rho.dim() as u64;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    for v in rho.entries() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read and validate a density matrix.
pub fn read_density(mut r: impl Read) -> Result<DensityMatrix> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
        r.read_exact(&mut word)
            .map_err(|e| Error::Format(format!("truncated density matrix: {e}")))?;
        Ok(word)
    };
    let rows = u64::from_le_bytes(next(&mut r)?) as usize;
    let cols = u64::from_le_bytes(next(&mut r)?) as usize;
    if rows != cols || rows < 2 || !rows.is_power_of_two() || rows > 1 << super::HARD_MAX_QUBITS {
        return Err(Error::Format(format!("unsupported header {rows}x{cols}")));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re = f64::from_le_bytes(next(&mut r)?);
        let im = f64::from_le_bytes(next(&mut r)?);
        data.push(C64::new(re, im));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after density matrix".into()));
    }
    DensityMatrix::from_entries(rows.trailing_zeros() as usize, data)
}

pub fn write_density_file(path: &Path, rho: &DensityMatrix) -> Result<()> {
    write_density(BufWriter::new(std::fs::File::create(path)?), rho)
}

pub fn read_density_file(path: &Path) -> Result<DensityMatrix> {
    read_density(BufReader::new(std::fs::File::open(path)?))
}

/// CSV with columns `row,col,re,im`.
pub fn write_density_csv(rho: &DensityMatrix) -> String {
    let d = rho.dim();
    let mut out = String::from("row,col,re,im\n");
    for i in 0..d {
        for j in 0..d {
            let v = rho.get(i, j);
            out.push_str(&format!("{i},{j},{:.17e},{:.17e}\n", v.re, v.im));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::GateOp;

    #[test]
    fn binary_round_trip() {
        let mut rho = DensityMatrix::zero_state(2).unwrap();
        rho.apply(&GateOp::Hadamard(0)).unwrap();
        rho.apply(&GateOp::Cnot {
            control: 0,
            target: 1,
        })
        .unwrap();
        let mut buf = Vec::new();
        write_density(&mut buf, &rho).unwrap();
        assert_eq!(buf.len(), 16 + 16 * 16);
        assert_eq!(&buf[..8], &4u64.to_le_bytes());
        assert_eq!(read_density(&buf[..]).unwrap(), rho);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(read_density(&[0u8; 4][..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        buf.extend(3u64.to_le_bytes());
        buf.extend(3u64.to_le_bytes());
        assert!(matches!(read_density(&buf[..]), Err(Error::Format(_))));
        let mut ok = Vec::new();
        write_density(&mut ok, &DensityMatrix::zero_state(1).unwrap()).unwrap();
        ok.push(0);
        assert!(matches!(read_density(&ok[..]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = write_density_csv(&DensityMatrix::zero_state(1).unwrap());
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("row,col,re,im\n0,0,1.00000000000000000e0,"));
    }
}
