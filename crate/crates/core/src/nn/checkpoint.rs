//! `GDF1` container: magic, entry count, then per entry the name, the shape
//! and the values. All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::{Tensor, MAX_RANK};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GDF1";

pub fn encode(entries: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { buf, pos: 0 };
    let magic = c.take(4)?;
    if magic != MAGIC {
        let found = String::from_utf8_lossy(magic);
        return Err(Error::Checkpoint(if magic.starts_with(b"GDF") {
            format!(
                "unsupported checkpoint version {found}, expected {}",
                String::from_utf8_lossy(MAGIC)
            )
        } else {
            format!("not a checkpoint (magic {found:?})")
        }));
    }
    let count = c.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
        let rank = c.u32()? as usize;
        if rank > MAX_RANK {
            return Err(Error::Checkpoint(format!("entry '{name}' has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&l| l <= (buf.len() - c.pos) / 8)
            .ok_or_else(|| Error::Checkpoint(format!("entry '{name}' shape {shape:?} exceeds file")))?;
        let raw = c.take(len * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor { shape, data }));
    }
    if c.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last entry",
            buf.len() - c.pos
        )));
    }
    Ok(entries)
}

pub fn write_file(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(entries)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
