//! Checkpoint container: magic "ARBD01", then per-tensor records of
//! (name, shape, row-major f32 little-endian data). Carries network
//! parameters, optimizer moments, and training counters alike — anything
//! named and rectangular.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"ARBD01";
/// Hard cap on tensor entries/dims to reject corrupt headers early.
const MAX_TENSORS: u32 = 1 << 20;
const MAX_DIM: u32 = 1 << 28;

/// Named tensor payload: shape plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorRecord {
    pub fn scalar(v: f32) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self { shape: vec![data.len()], data }
    }
}

/// Ordered name -> tensor map (BTreeMap so files are byte-stable).
pub type Checkpoint = BTreeMap<String, TensorRecord>;

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(ckpt.len() as u32).to_le_bytes());
    for (name, rec) in ckpt {
        let expected: usize = rec.shape.iter().product();
        if expected != rec.data.len() {
            return Err(Error::checkpoint(format!(
                "tensor {name}: shape {:?} does not match {} values",
                rec.shape,
                rec.data.len()
            )));
        }
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(rec.shape.len() as u32).to_le_bytes());
        for &d in &rec.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &rec.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::checkpoint("truncated checkpoint file"));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    let read_u32 = |off: &mut usize| -> Result<u32> {
        let s = take(off, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut off, MAGIC.len())? != MAGIC {
        return Err(Error::checkpoint("bad magic: not a checkpoint file"));
    }
    let count = read_u32(&mut off)?;
    if count > MAX_TENSORS {
        return Err(Error::checkpoint(format!("implausible tensor count {count}")));
    }
    let mut ckpt = Checkpoint::new();
    for _ in 0..count {
        let name_len = read_u32(&mut off)? as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|_| Error::checkpoint("tensor name is not UTF-8"))?;
        let ndim = read_u32(&mut off)? as usize;
        if ndim > 8 {
            return Err(Error::checkpoint(format!("tensor {name}: implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = read_u32(&mut off)?;
            if d > MAX_DIM {
                return Err(Error::checkpoint(format!("tensor {name}: implausible dim {d}")));
            }
            shape.push(d as usize);
            len = len.saturating_mul(d as usize);
        }
        let raw = take(&mut off, len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        ckpt.insert(name, TensorRecord { shape, data });
    }
    if off != bytes.len() {
        return Err(Error::checkpoint("trailing bytes after last tensor"));
    }
    Ok(ckpt)
}

/// Fetch a tensor, with a descriptive error naming what is missing.
pub fn require<'a>(ckpt: &'a Checkpoint, name: &str) -> Result<&'a TensorRecord> {
    ckpt.get(name)
        .ok_or_else(|| Error::checkpoint(format!("missing tensor {name}")))
}

/// Fetch a scalar entry.
pub fn require_scalar(ckpt: &Checkpoint, name: &str) -> Result<f32> {
    let rec = require(ckpt, name)?;
    if rec.data.len() != 1 {
        return Err(Error::checkpoint(format!("tensor {name} is not a scalar")));
    }
    Ok(rec.data[0])
}
