//! Shard layout, little-endian: `"PCDS"`, version `u32`, `n u32`, `k u32`,
//! count `u64`, then per sample `x` (`n`), `Z` and `Y` (`n x k` each,
//! column-major), all `f64`.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::TrainingSample;
use crate::error::{Error, Result};
use crate::swmodel::{GridSpec, StateVector};

pub const PCDS_MAGIC: &[u8; 4] = b"PCDS";
pub const PCDS_VERSION: u32 = 1;
pub const SHARD_HEADER_LEN: u64 = 24;

/// File size of a shard holding `count` samples.
pub fn shard_len(n: usize, k: usize, count: usize) -> u64 {
    SHARD_HEADER_LEN + (count as u64) * ((n + 2 * n * k) as u64) * 8
}

pub fn write_shard(samples: &[TrainingSample], path: impl AsRef<Path>) -> Result<()> {
    let (n, k) = match samples.first() {
        Some(s) => (s.n(), s.k()),
        None => (0, 0),
    };
    if samples.iter().any(|s| s.n() != n || s.k() != k || s.x.len() != n || s.y.shape() != (n, k)) {
        return Err(Error::Shape("samples in a shard must share n and k".into()));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(PCDS_MAGIC)?;
    w.write_all(&PCDS_VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(k as u32).to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        for v in s.x.as_slice().iter().chain(s.z.as_slice()).chain(s.y.as_slice()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Splits `samples` into `prefix-0000.pcds`, `prefix-0001.pcds`, ... each at
/// most `max_bytes` long (at least one sample per shard).
pub fn write_shards(samples: &[TrainingSample], dir: impl AsRef<Path>, prefix: &str, max_bytes: Option<u64>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let per_shard = match (samples.first(), max_bytes) {
        (Some(s), Some(cap)) => {
            let each = shard_len(s.n(), s.k(), 1) - SHARD_HEADER_LEN;
            (cap.saturating_sub(SHARD_HEADER_LEN) / each).max(1) as usize
        }
        _ => samples.len().max(1),
    };
    let mut paths = Vec::new();
    for (i, chunk) in samples.chunks(per_shard).enumerate() {
        let p = dir.join(format!("{prefix}-{i:04}.pcds"));
        write_shard(chunk, &p)?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn read_shard(path: impl AsRef<Path>, grid: GridSpec) -> Result<Vec<TrainingSample>> {
    let bytes = std::fs::read(path)?;
    let found = bytes.len() as u64;
    if found < SHARD_HEADER_LEN {
        return Err(Error::Truncated { expected: SHARD_HEADER_LEN, found });
    }
    if &bytes[..4] != PCDS_MAGIC {
        return Err(Error::Version("not a dataset shard (bad magic)".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if word(4) != PCDS_VERSION {
        return Err(Error::Version(format!("shard version {}, expected {PCDS_VERSION}", word(4))));
    }
    let (n, k) = (word(8) as usize, word(12) as usize);
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    if count > 0 && n != grid.state_len() {
        return Err(Error::Shape(format!("shard holds n = {n}, grid has n = {}", grid.state_len())));
    }
    let expected = shard_len(n, k, count);
    if found != expected {
        return Err(Error::Truncated { expected, found });
    }
    let mut vals = bytes[SHARD_HEADER_LEN as usize..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |m: usize| -> Vec<f64> { vals.by_ref().take(m).collect() };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x = StateVector::from_vec(take(n), grid)?;
        let z = DMatrix::from_vec(n, k, take(n * k));
        let y = DMatrix::from_vec(n, k, take(n * k));
        out.push(TrainingSample { x, z, y });
    }
    Ok(out)
}
