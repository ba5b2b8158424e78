//! `TGF1` feature container.
//!
//! ```text
//! offset  size          field
//! 0       4             magic  "TGF1"
//! 4       4             count  u32 little-endian
//! 8       4             dim    u32 little-endian
//! 12      count·dim·4   payload, f32 little-endian, row-major
//! ```

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"TGF1";
pub const HEADER_LEN: usize = 12;

fn format_err(path: &Path, offset: u64, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    }
}

/// Serialises a matrix; values are stored as `f32`.
pub fn encode(matrix: &Tensor) -> Result<Vec<u8>> {
    let count = u32::try_from(matrix.rows())
        .map_err(|_| Error::contract("row count exceeds u32"))?;
    let dim = u32::try_from(matrix.cols())
        .map_err(|_| Error::contract("column count exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (i, &v) in matrix.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Numeric {
                op: format!("feature value {i} is not representable as finite f32"),
            });
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format_err(path, 0, "bad magic, expected TGF1"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err(path, bytes.len() as u64, "truncated header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    Ok((count, dim))
}

/// Parses a complete file image.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<Tensor> {
    let (count, dim) = parse_header(path, bytes)?;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(path, 4, "payload size overflows"))?;
    if bytes.len() < expected {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("truncated payload, expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(path, expected as u64, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(count * dim);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(format_err(
                path,
                (HEADER_LEN + 4 * i) as u64,
                "non-finite value",
            ));
        }
        data.push(v as f64);
    }
    Tensor::new(count, dim, data)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

pub fn write_feature_file(path: impl AsRef<Path>, matrix: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(matrix)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads only the header, returning `(count, dim)`.
pub fn read_header(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    file.by_ref()
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    parse_header(path, &buf)
}
