//! The `RTF1` binary field-dump format.
//!
//! Layout (little endian): magic `RTF1`, `u32` dimension, `u32` degree,
//! `u32` kind (0 matrix, 1 vector), `u32` points per axis, then `f64` pairs
//! `(lo, hi)` for each axis in turn, then the payload in storage order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::forms::{Form, Kind, Matrix, MatrixForm, Vector, VectorForm};
use crate::grid::Grid;

pub const MAGIC: &[u8; 4] = b"RTF1";

#[derive(Clone, Debug, PartialEq)]
pub enum AnyForm {
    Matrix(MatrixForm),
    Vector(VectorForm),
}

impl AnyForm {
    pub fn grid(&self) -> &Grid {
        match self {
            AnyForm::Matrix(f) => f.grid(),
            AnyForm::Vector(f) => f.grid(),
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            AnyForm::Matrix(f) => f.degree(),
            AnyForm::Vector(f) => f.degree(),
        }
    }

    pub fn into_matrix(self) -> Result<MatrixForm> {
        match self {
            AnyForm::Matrix(f) => Ok(f),
            AnyForm::Vector(_) => Err(Error::Format("expected a matrix-valued form".into())),
        }
    }

    pub fn into_vector(self) -> Result<VectorForm> {
        match self {
            AnyForm::Vector(f) => Ok(f),
            AnyForm::Matrix(_) => Err(Error::Format("expected a vector-valued form".into())),
        }
    }
}

pub fn write_form<K: Kind, W: Write>(form: &Form<K>, mut out: W) -> Result<()> {
    let g = form.grid();
    let mut buf = Vec::with_capacity(16 + 4 * g.dim() + 16 * g.dim() + 8 * form.data().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(form.degree() as u32).to_le_bytes());
    buf.extend_from_slice(&K::CODE.to_le_bytes());
    for &s in g.shape() {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for a in 0..g.dim() {
        buf.extend_from_slice(&g.lo()[a].to_le_bytes());
        buf.extend_from_slice(&g.hi()[a].to_le_bytes());
    }
    for v in form.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("truncated RTF1 stream".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}

fn take_f64(bytes: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(bytes, 8)?.try_into().unwrap()))
}

pub fn read_form<R: Read>(mut input: R) -> Result<AnyForm> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    let mut bytes = raw.as_slice();
    if take(&mut bytes, 4)? != MAGIC {
        return Err(Error::Format("bad magic, not an RTF1 stream".into()));
    }
    let n = take_u32(&mut bytes)? as usize;
    if !(n == 2 || n == 3) {
        return Err(Error::Format(format!("unsupported dimension {n}")));
    }
    let degree = take_u32(&mut bytes)? as usize;
    let kind = take_u32(&mut bytes)?;
    let mut shape = Vec::with_capacity(n);
    for _ in 0..n {
        shape.push(take_u32(&mut bytes)? as usize);
    }
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for _ in 0..n {
        lo.push(take_f64(&mut bytes)?);
        hi.push(take_f64(&mut bytes)?);
    }
    let grid = Grid::new(&shape, &lo, &hi).map_err(|e| Error::Format(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("payload is not a whole number of f64".into()));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    match kind {
        Matrix::CODE => Ok(AnyForm::Matrix(
            Form::from_vec(&grid, degree, data).map_err(|e| Error::Format(e.to_string()))?,
        )),
        Vector::CODE => Ok(AnyForm::Vector(
            Form::from_vec(&grid, degree, data).map_err(|e| Error::Format(e.to_string()))?,
        )),
        k => Err(Error::Format(format!("unknown kind code {k}"))),
    }
}

pub fn save<K: Kind>(form: &Form<K>, path: impl AsRef<Path>) -> Result<()> {
    write_form(form, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<AnyForm> {
    read_form(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let g = Grid::new(&[3, 4], &[-1.0, 0.0], &[1.0, 2.0]).unwrap();
        let f = VectorForm::from_fn(&g, 1, |s, m, x| s as f64 + m as f64 + x[0]);
        let mut buf = Vec::new();
        write_form(&f, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"RTF1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), -1.0);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 1.0);
        assert_eq!(buf.len(), 56 + 8 * 2 * 2 * 12);
        let back = read_form(buf.as_slice()).unwrap().into_vector().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_corruption() {
        let g = Grid::unit(2, 3).unwrap();
        let mut buf = Vec::new();
        write_form(&MatrixForm::identity(&g), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_form(bad.as_slice()), Err(Error::Format(_))));
        buf.pop();
        assert!(matches!(read_form(buf.as_slice()), Err(Error::Format(_))));
    }
}
