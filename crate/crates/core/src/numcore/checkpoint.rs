//! `EGCK` parameter checkpoints.
//!
//! Layout (all integers little-endian u32):
//! magic `EGCK`, version, then one record per parameter until end of file:
//! name length, name bytes (UTF-8), rank, extents, f32 payload.

use std::io::{Read, Write};

use super::params::ParamStore;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<F: Scalar, W: Write>(params: &ParamStore<F>, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn checkpoint_bytes<F: Scalar>(params: &ParamStore<F>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Cursor over an in-memory buffer that reports byte offsets in errors.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.offset(),
                format!(
                    "truncated {what}: need {n} bytes, {} left",
                    self.buf.len() - self.pos
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.offset(), format!("{what} size overflows")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let start = self.offset();
        let m = self.take(4, "magic")?;
        if m != expected {
            return Err(Error::format(
                start,
                format!("bad magic {:?}, expected {:?}", m, std::str::from_utf8(expected).unwrap()),
            ));
        }
        Ok(())
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore<f32>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    parse_checkpoint(&buf)
}

pub fn parse_checkpoint(buf: &[u8]) -> Result<ParamStore<f32>> {
    let mut rd = ByteReader::new(buf);
    rd.magic(CHECKPOINT_MAGIC)?;
    let at = rd.offset();
    let version = rd.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(at, format!("unsupported checkpoint version {version}")));
    }
    let mut store = ParamStore::new();
    while !rd.at_end() {
        let at = rd.offset();
        let len = rd.u32("name length")? as usize;
        let name = std::str::from_utf8(rd.take(len, "name")?)
            .map_err(|_| Error::format(at + 4, "parameter name is not UTF-8"))?
            .to_string();
        let rank = rd.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let at = rd.offset();
            let e = rd.u32("extent")? as usize;
            if e == 0 {
                return Err(Error::format(at, format!("zero extent in {name}")));
            }
            shape.push(e);
        }
        let n: usize = shape.iter().product();
        let data = rd.f32s(n, "payload")?;
        store.push(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}
