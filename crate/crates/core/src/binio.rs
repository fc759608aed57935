//! Little-endian binary primitives shared by the checkpoint formats.

use std::io::{self, Read, Write};

use crate::scalar::Scalar;
use crate::vecmath::Matrix;

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Row-major f64 dump; scalars are widened through f64 regardless of S.
pub(crate) fn write_matrix<S: Scalar>(w: &mut impl Write, m: &Matrix<S>) -> io::Result<()> {
    for &x in m.data() {
        write_f64(w, x.to_f64_value())?;
    }
    Ok(())
}

pub(crate) fn read_matrix<S: Scalar>(
    r: &mut impl Read,
    rows: usize,
    cols: usize,
) -> io::Result<Matrix<S>> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(S::lit(read_f64(r)?));
    }
    Ok(Matrix::from_vec(rows, cols, data).expect("sized by construction"))
}

/// Length-prefixed UTF-8 blob.
pub(crate) fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    write_u64(w, bytes.len() as u64)?;
    w.write_all(bytes)
}

pub(crate) fn read_bytes(r: &mut impl Read, cap: u64) -> io::Result<Vec<u8>> {
    let len = read_u64(r)?;
    if len > cap {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("length-prefixed block of {len} bytes exceeds cap {cap}"),
        ));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}
