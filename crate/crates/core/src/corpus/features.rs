//! `EGFT` image feature files.
//!
//! Layout (integers little-endian u32): magic `EGFT`, version, count,
//! dimension, then `count` id entries (length + UTF-8 bytes), then
//! `count × dimension` little-endian f32 values in id order.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numcore::ByteReader;

pub const FEATURE_MAGIC: &[u8; 4] = b"EGFT";
pub const FEATURE_VERSION: u32 = 1;
pub const DEFAULT_FEATURE_DIM: usize = 4096;

/// Precomputed image feature vectors keyed by image id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::dim("FeatureStore::insert", &[self.dim], &[vector.len()]));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value for image {id}")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Data(format!("duplicate image id {id}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&FEATURE_VERSION.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for id in &self.ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn parse(buf: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(buf);
        rd.magic(FEATURE_MAGIC)?;
        let at = rd.offset();
        let version = rd.u32("version")?;
        if version != FEATURE_VERSION {
            return Err(Error::format(at, format!("unsupported feature file version {version}")));
        }
        let count = rd.u32("count")? as usize;
        let at = rd.offset();
        let dim = rd.u32("dimension")? as usize;
        if dim == 0 {
            return Err(Error::format(at, "feature dimension is zero"));
        }
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let at = rd.offset();
            let len = rd.u32("id length")? as usize;
            let id = std::str::from_utf8(rd.take(len, "id")?)
                .map_err(|_| Error::format(at + 4, "image id is not UTF-8"))?;
            ids.push(id.to_string());
        }
        let values = count
            .checked_mul(dim)
            .ok_or_else(|| Error::format(rd.offset(), "count × dimension overflows"))?;
        let data = rd.f32s(values, "feature payload")?;
        if !rd.at_end() {
            return Err(Error::format(rd.offset(), "trailing bytes after feature payload"));
        }
        let mut store = FeatureStore::new(dim);
        for (i, id) in ids.into_iter().enumerate() {
            store.insert(id, &data[i * dim..(i + 1) * dim])?;
        }
        Ok(store)
    }
}

pub fn load_image_features<R: Read>(mut r: R) -> Result<FeatureStore> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    FeatureStore::parse(&buf)
}
