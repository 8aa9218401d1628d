//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"CGDN"  u32 version
//! u32 descriptor_len  descriptor (JSON of the Architecture)
//! u32 tensor_count
//! per tensor: u32 name_len  name  u32 ndim  u64 dims[ndim]  f64 data[prod(dims)]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::network::{Architecture, EmbedderParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CGDN";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint(params: &EmbedderParams, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let desc = serde_json::to_vec(&params.arch)?;
    w.write_all(&(desc.len() as u32).to_le_bytes())?;
    w.write_all(&desc)?;
    let tensors = params.named_tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, shape, data) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated checkpoint"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated checkpoint"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(bad("truncated checkpoint"));
    }
    Ok(buf)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<EmbedderParams> {
    let magic = read_bytes(&mut r, 4)?;
    if magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let arch: Architecture = serde_json::from_slice(&read_bytes(&mut r, len)?)
        .map_err(|e| bad(format!("bad architecture descriptor: {e}")))?;
    let mut params = EmbedderParams::zeros(&arch).map_err(|e| bad(e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    let count = read_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(bad(format!(
            "checkpoint has {count} tensors, architecture needs {}",
            expected.len()
        )));
    }
    for ((name, shape), dst) in expected.into_iter().zip(params.tensors_mut()) {
        let nlen = read_u32(&mut r)? as usize;
        let got = String::from_utf8(read_bytes(&mut r, nlen)?).map_err(|_| bad("tensor name is not UTF-8"))?;
        if got != name {
            return Err(bad(format!("expected tensor {name}, found {got}")));
        }
        let ndim = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(&mut r)? as usize);
        }
        if dims != shape {
            return Err(bad(format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
        }
        for v in dst.iter_mut() {
            *v = f64::from_le_bytes(read_u64(&mut r)?.to_le_bytes());
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after last tensor"));
    }
    if !params.is_finite() {
        return Err(bad("checkpoint contains non-finite values"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &EmbedderParams, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(params, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EmbedderParams> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
