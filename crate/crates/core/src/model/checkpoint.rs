//! Bit-exact binary storage for parameter matrices.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TLM1";

pub fn write_arrays(path: &Path, arrays: &[&Array2<f64>]) -> Result<()> {
    let total: usize = arrays.iter().map(|a| a.len()).sum();
    let mut buf = Vec::with_capacity(8 + 16 * arrays.len() + 8 * total);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        let (r, c) = a.dim();
        buf.extend_from_slice(&(r as u64).to_le_bytes());
        buf.extend_from_slice(&(c as u64).to_le_bytes());
        for x in a.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_arrays(path: &Path) -> Result<Vec<Array2<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::format(path, 0, m);
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated parameter file"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("not a parameter file"));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let c = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let n = r.checked_mul(c).ok_or_else(|| bad("bad shape"))?;
        let data = take(n.checked_mul(8).ok_or_else(|| bad("bad shape"))?)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        out.push(Array2::from_shape_vec((r, c), data).map_err(|_| bad("bad shape"))?);
    }
    Ok(out)
}
