//! Low-level helpers for the binary container formats (XEMB embedding
//! caches, XPRJ projection matrices, XOTE model checkpoints).
//!
//! All integers are little-endian u32 unless noted; strings are u32
//! length-prefixed UTF-8. A truncated stream surfaces as a format error, not
//! a partial object.

use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

pub const CONTAINER_VERSION: u32 = 1;

fn eof(err: std::io::Error) -> Error {
    if err.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file (truncated container)".into())
    } else {
        Error::Io(err)
    }
}

pub fn write_magic(w: &mut impl Write, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(CONTAINER_VERSION)?;
    Ok(())
}

/// Read and validate a 4-byte magic plus the format version.
pub fn read_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(eof)?;
    if &buf != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(eof)?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!(
            "unsupported {} container version {version}",
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_u32::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_u32(r: &mut impl Read) -> Result<u32> {
    r.read_u32::<LittleEndian>().map_err(eof)
}

pub fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(eof)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("invalid UTF-8 in container: {e}")))
}

pub fn write_f32_values(w: &mut impl Write, values: impl Iterator<Item = f32>) -> Result<()> {
    for v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_f32_values(r: &mut impl Read, count: usize) -> Result<Vec<f32>> {
    let mut out = vec![0f32; count];
    r.read_f32_into::<LittleEndian>(&mut out).map_err(eof)?;
    Ok(out)
}

/// Write a shaped f64 tensor: ndim, dims, then values.
pub fn write_f64_tensor(w: &mut impl Write, shape: &[usize], values: &[f64]) -> Result<()> {
    debug_assert_eq!(shape.iter().product::<usize>(), values.len());
    write_u32(w, shape.len() as u32)?;
    for &d in shape {
        write_u32(w, d as u32)?;
    }
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

/// Read a shaped f64 tensor written by [`write_f64_tensor`].
pub fn read_f64_tensor(r: &mut impl Read) -> Result<(Vec<usize>, Vec<f64>)> {
    let ndim = read_u32(r)? as usize;
    if ndim > 8 {
        return Err(Error::Format(format!("implausible tensor rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u32(r)? as usize);
    }
    let count: usize = shape.iter().product();
    let mut values = vec![0f64; count];
    r.read_f64_into::<LittleEndian>(&mut values).map_err(eof)?;
    Ok((shape, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_and_tensor_roundtrip() {
        let mut buf = Vec::new();
        write_magic(&mut buf, b"XTST").unwrap();
        write_string(&mut buf, "héllo").unwrap();
        write_f64_tensor(&mut buf, &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();

        let mut r = buf.as_slice();
        read_magic(&mut r, b"XTST").unwrap();
        assert_eq!(read_string(&mut r).unwrap(), "héllo");
        let (shape, values) = read_f64_tensor(&mut r).unwrap();
        assert_eq!(shape, vec![2, 3]);
        assert_eq!(values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut buf = Vec::new();
        write_magic(&mut buf, b"XAAA").unwrap();
        let mut r = buf.as_slice();
        assert!(matches!(read_magic(&mut r, b"XBBB"), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_format_error() {
        let mut buf = Vec::new();
        write_string(&mut buf, "four").unwrap();
        let mut r = &buf[..buf.len() - 1];
        assert!(matches!(read_string(&mut r), Err(Error::Format(_))));
    }
}
