//! `CKP1` parameter checkpoints.
//!
//! Layout (little-endian): magic `CKP1`, then one record per tensor until end
//! of file: name length `u16`, UTF-8 name, rank `u8`, `rank` x `u32` dims,
//! `f32` data.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::real::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKP1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

pub fn write_records(records: &[CheckpointRecord], mut w: impl Write) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for r in records {
        let name = r.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| bad(format!("name too long: {}", r.name)))?;
        let rank = u8::try_from(r.dims.len()).map_err(|_| bad("rank above 255"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[rank])?;
        for &d in &r.dims {
            let d = u32::try_from(d).map_err(|_| bad("dimension above u32"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &r.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_records(mut r: impl Read) -> Result<Vec<CheckpointRecord>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 4 || &buf[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing CKP1 magic"));
    }
    let mut pos = 4;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        let end = *pos + n;
        let slice = buf
            .get(*pos..end)
            .ok_or_else(|| bad(format!("truncated record at byte {}", *pos)))?;
        *pos = end;
        Ok(slice)
    };
    let mut records = Vec::new();
    while pos < buf.len() {
        let len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name_at = pos;
        let name = std::str::from_utf8(take(&mut pos, len)?)
            .map_err(|_| bad(format!("invalid UTF-8 name at byte {name_at}")))?
            .to_string();
        let rank = take(&mut pos, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = dims.iter().product();
        let raw = take(&mut pos, numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(CheckpointRecord { name, dims, data });
    }
    Ok(records)
}

pub fn save<T: Real>(store: &ParamStore<T>, w: impl Write) -> Result<()> {
    let records: Vec<CheckpointRecord> = store
        .iter()
        .map(|(name, t)| CheckpointRecord {
            name: name.to_string(),
            dims: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
        })
        .collect();
    write_records(&records, w)
}

/// Loads by name; every stored parameter must be present with identical
/// dims and the file may not contain unknown names.
pub fn load<T: Real>(store: &mut ParamStore<T>, r: impl Read) -> Result<()> {
    let records = read_records(r)?;
    let mut seen = vec![false; store.len()];
    for rec in records {
        let id = store
            .id(&rec.name)
            .ok_or_else(|| bad(format!("unknown parameter {}", rec.name)))?;
        let target = store.get_mut(id);
        if target.shape() != rec.dims.as_slice() {
            return Err(bad(format!(
                "parameter {} has dims {:?}, checkpoint has {:?}",
                rec.name,
                target.shape(),
                rec.dims
            )));
        }
        for (dst, &src) in target.data_mut().iter_mut().zip(&rec.data) {
            *dst = T::of(src as f64);
        }
        seen[id.index()] = true;
    }
    if let Some(missing) = store.ids().find(|id| !seen[id.index()]) {
        return Err(bad(format!("checkpoint lacks parameter {}", store.name(missing))));
    }
    Ok(())
}
