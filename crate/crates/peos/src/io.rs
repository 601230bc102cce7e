//! `.fvecs` / `.ivecs` files: each row is a little-endian `i32` dimension
//! followed by that many `f32` (or `i32`) values.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use peos_core::Dataset;

use crate::error::{Error, Result};

fn rows(bytes: &[u8], what: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut at = 0usize;
    while at < bytes.len() {
        if bytes.len() - at < 4 {
            return Err(Error::Format(format!("truncated {what} row header at byte {at}")));
        }
        let d = LittleEndian::read_i32(&bytes[at..]);
        if d <= 0 {
            return Err(Error::Format(format!("{what} row at byte {at} has dimension {d}")));
        }
        let d = d as usize;
        let end = at + 4 + 4 * d;
        if end > bytes.len() {
            return Err(Error::Format(format!("truncated {what} row at byte {at}")));
        }
        out.push((at + 4, d));
        at = end;
    }
    Ok(out)
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<Dataset> {
    let rows = rows(bytes, "fvecs")?;
    let dim = rows.first().map(|r| r.1).ok_or_else(|| Error::Format("empty fvecs file".into()))?;
    let mut data = Vec::with_capacity(rows.len() * dim);
    for &(at, d) in &rows {
        if d != dim {
            return Err(Error::Format(format!("fvecs rows have dimensions {dim} and {d}")));
        }
        let start = data.len();
        data.resize(start + d, 0.0);
        LittleEndian::read_f32_into(&bytes[at..at + 4 * d], &mut data[start..]);
    }
    Ok(Dataset::new(dim, data)?)
}

pub fn encode_fvecs(ds: &Dataset) -> Vec<u8> {
    let mut out = vec![0u8; ds.len() * (4 + 4 * ds.dim())];
    for (row, chunk) in ds.rows().zip(out.chunks_exact_mut(4 + 4 * ds.dim())) {
        LittleEndian::write_i32(chunk, ds.dim() as i32);
        LittleEndian::write_f32_into(row, &mut chunk[4..]);
    }
    out
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<Vec<Vec<u32>>> {
    rows(bytes, "ivecs")?
        .into_iter()
        .map(|(at, d)| {
            let mut row = vec![0i32; d];
            LittleEndian::read_i32_into(&bytes[at..at + 4 * d], &mut row);
            row.into_iter().map(|x| u32::try_from(x).map_err(|_| Error::Format(format!("negative id {x} in ivecs")))).collect()
        })
        .collect()
}

pub fn encode_ivecs(rows: &[Vec<u32>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for row in rows {
        if row.is_empty() {
            return Err(Error::Format("ivecs rows cannot be empty".into()));
        }
        let mut buf = vec![0u8; 4 + 4 * row.len()];
        LittleEndian::write_i32(&mut buf, row.len() as i32);
        for (x, c) in row.iter().zip(buf[4..].chunks_exact_mut(4)) {
            let x = i32::try_from(*x).map_err(|_| Error::Format(format!("id {x} does not fit ivecs")))?;
            LittleEndian::write_i32(c, x);
        }
        out.extend_from_slice(&buf);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_fvecs(&read(path.as_ref())?)
}

pub fn write_fvecs(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    write(path.as_ref(), &encode_fvecs(ds))
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    parse_ivecs(&read(path.as_ref())?)
}

pub fn write_ivecs(path: impl AsRef<Path>, rows: &[Vec<u32>]) -> Result<()> {
    write(path.as_ref(), &encode_ivecs(rows)?)
}
