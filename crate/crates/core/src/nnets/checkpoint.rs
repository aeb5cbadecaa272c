//! Binary tensor container (`HOLOTILE1`).
//!
//! Layout, all integers little-endian:
//! `b"HOLOTILE1"`, `u32` entry count, then per entry `u32` name length,
//! UTF-8 name, `u32` rank, `rank x u64` dims, `prod(dims) x f64` data.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 9] = b"HOLOTILE1";

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, value) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.ndim() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in value.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ParamStore> {
    let bad = |m: &str| Error::format(path, m.to_string());
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 9];
    cur.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a HOLOTILE1 checkpoint"));
    }
    let count = read_u32(&mut cur).ok_or_else(|| bad("truncated entry count"))?;
    let mut store = ParamStore::new();
    for i in 0..count {
        let trunc = || bad(&format!("truncated entry {i}"));
        let len = read_u32(&mut cur).ok_or_else(trunc)? as usize;
        let mut name = vec![0u8; len.min(bytes.len())];
        cur.read_exact(&mut name).map_err(|_| trunc())?;
        let name = String::from_utf8(name).map_err(|_| bad(&format!("entry {i} name is not UTF-8")))?;
        let rank = read_u32(&mut cur).ok_or_else(trunc)? as usize;
        if rank > 8 {
            return Err(bad(&format!("entry {name} has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u64(&mut cur).ok_or_else(trunc)? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.saturating_mul(8) <= bytes.len())
            .ok_or_else(|| bad(&format!("entry {name} is larger than the file")))?;
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            cur.read_exact(&mut buf).map_err(|_| trunc())?;
            data.push(f64::from_le_bytes(buf));
        }
        let value = ArrayD::from_shape_vec(IxDyn(&dims), data).expect("length matches dims");
        store.add(name, value);
    }
    if (cur.position() as usize) != bytes.len() {
        return Err(bad("trailing bytes after last entry"));
    }
    Ok(store)
}

pub fn save(path: &Path, store: &ParamStore) -> Result<()> {
    fs::write(path, encode(store)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Option<u32> {
    let mut b = [0u8; 4];
    cur.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut Cursor<&[u8]>) -> Option<u64> {
    let mut b = [0u8; 8];
    cur.read_exact(&mut b).ok()?;
    Some(u64::from_le_bytes(b))
}
