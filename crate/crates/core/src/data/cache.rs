//! Cache format: `RPDS1`, then little-endian `u64 n`, `u64 d`, `u32 c`,
//! `n * d` f64 row-major, `n` u32 labels.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 5] = b"RPDS1";
const HEADER: usize = 5 + 8 + 8 + 4;

pub fn save_cache(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(CACHE_MAGIC)?;
    write(&(data.len() as u64).to_le_bytes())?;
    write(&(data.dim() as u64).to_le_bytes())?;
    write(&(data.classes() as u32).to_le_bytes())?;
    for v in data.inputs().iter() {
        write(&v.to_le_bytes())?;
    }
    for &l in data.labels() {
        write(&(l as u32).to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() < 5 || &raw[..5] != CACHE_MAGIC {
        let mut head = [0u8; 4];
        for (h, b) in head.iter_mut().zip(&raw) {
            *h = *b;
        }
        return Err(Error::BadMagic {
            path: path.into(),
            found: u32::from_be_bytes(head),
            expected: u32::from_be_bytes(*b"RPDS"),
        });
    }
    if raw.len() < HEADER {
        return Err(Error::Truncated {
            path: path.into(),
            detail: "header".into(),
        });
    }
    let n = u64::from_le_bytes(raw[5..13].try_into().expect("8 bytes")) as usize;
    let d = u64::from_le_bytes(raw[13..21].try_into().expect("8 bytes")) as usize;
    let c = u32::from_le_bytes(raw[21..25].try_into().expect("4 bytes")) as usize;
    let expect = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(8))
        .and_then(|b| b.checked_add(n * 4))
        .and_then(|b| b.checked_add(HEADER))
        .ok_or_else(|| Error::Malformed {
            path: path.into(),
            detail: format!("n={n} d={d} overflows"),
        })?;
    if raw.len() != expect {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("{} bytes, header implies {expect}", raw.len()),
        });
    }
    let body = &raw[HEADER..];
    let values: Vec<f64> = body[..n * d * 8]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let labels: Vec<usize> = body[n * d * 8..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        .collect();
    let inputs = Array2::from_shape_vec((n, d), values).expect("cache shape");
    Dataset::new(inputs, labels, c, format!("cache:{}", path.display())).map_err(|e| {
        Error::Malformed {
            path: path.into(),
            detail: e.to_string(),
        }
    })
}
