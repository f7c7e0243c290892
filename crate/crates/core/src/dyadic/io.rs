//! Binary field container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "DYFIELD\0"
//! version  u32      1
//! d        u32
//! K        u32
//! n        u32
//! boundary u32      0 = torus, 1 = zero extension
//! cells    u64      2^{Kd}
//! values   cells * n * n * (re f64, im f64), cells row-major, each matrix row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::field::MatrixField;
use super::grid::{Boundary, DyadicGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DYFIELD\0";
pub const VERSION: u32 = 1;

pub fn encode_field(f: &MatrixField) -> Vec<u8> {
    let g = f.grid();
    let n = g.matdim();
    let mut out = Vec::with_capacity(36 + f.data().len() * 16);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, g.dim() as u32, g.finest_level(), n as u32, g.boundary().code()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(g.num_cells() as u64).to_le_bytes());
    for cell in 0..g.num_cells() {
        let s = f.cell_slice(cell);
        for i in 0..n {
            for j in 0..n {
                let z = s[j * n + i];
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], len: usize) -> Result<&'a [u8]> {
    if buf.len() < len {
        return Err(Error::Format("unexpected end of container".into()));
    }
    let (head, tail) = buf.split_at(len);
    *buf = tail;
    Ok(head)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().unwrap()))
}

fn take_f64(buf: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(buf, 8)?.try_into().unwrap()))
}

pub fn decode_field(bytes: &[u8]) -> Result<MatrixField> {
    let mut buf = bytes;
    if take(&mut buf, 8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = take_u32(&mut buf)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = take_u32(&mut buf)? as usize;
    let k = take_u32(&mut buf)?;
    let n = take_u32(&mut buf)? as usize;
    let boundary = Boundary::from_code(take_u32(&mut buf)?)
        .ok_or_else(|| Error::Format("unknown boundary code".into()))?;
    let grid = DyadicGrid::new(d, k, n, boundary).map_err(|e| Error::Format(e.to_string()))?;
    let cells = u64::from_le_bytes(take(&mut buf, 8)?.try_into().unwrap()) as usize;
    if cells != grid.num_cells() {
        return Err(Error::Format(format!(
            "cell count {cells} does not match grid ({})",
            grid.num_cells()
        )));
    }
    if buf.len() != cells * n * n * 16 {
        return Err(Error::Format("payload length mismatch".into()));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); cells * n * n];
    for cell in 0..cells {
        for i in 0..n {
            for j in 0..n {
                let re = take_f64(&mut buf)?;
                let im = take_f64(&mut buf)?;
                data[cell * n * n + j * n + i] = Complex64::new(re, im);
            }
        }
    }
    Ok(MatrixField::from_raw(grid, data))
}

pub fn write_field(w: &mut impl Write, f: &MatrixField) -> Result<()> {
    w.write_all(&encode_field(f))?;
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<MatrixField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

/// Writes via a temporary sibling file and renames it into place.
pub fn save_field(path: &Path, f: &MatrixField) -> Result<()> {
    write_atomic(path, &encode_field(f))
}

pub fn load_field(path: &Path) -> Result<MatrixField> {
    decode_field(&fs::read(path)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Mat;

    #[test]
    fn roundtrip_is_bit_exact() {
        let g = DyadicGrid::new(2, 2, 2, Boundary::Zero).unwrap();
        let f = MatrixField::from_fn(g, |c| {
            Mat::from_fn(2, 2, |i, j| Complex64::new((c * 7 + i) as f64 / 3.0, -(j as f64) * 1e-300))
        });
        let back = decode_field(&encode_field(&f)).unwrap();
        assert_eq!(back.grid(), f.grid());
        for (a, b) in f.data().iter().zip(back.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn entries_are_row_major() {
        let g = DyadicGrid::new(1, 0, 2, Boundary::Torus).unwrap();
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0].map(|v| Complex64::new(v, 0.0)));
        let bytes = encode_field(&MatrixField::constant(g, &m));
        let first_im_free: Vec<f64> = (0..4)
            .map(|i| f64::from_le_bytes(bytes[36 + i * 16..44 + i * 16].try_into().unwrap()))
            .collect();
        assert_eq!(first_im_free, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_truncated_input() {
        let g = DyadicGrid::new(1, 2, 1, Boundary::Torus).unwrap();
        let bytes = encode_field(&MatrixField::zeros(g));
        assert!(matches!(decode_field(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_field(b"nonsense"), Err(Error::Format(_))));
    }
}
