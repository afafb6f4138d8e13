//! State snapshots and the image view of a state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridSpec, StateVector};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SWST";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Writes `x` as a 16-byte header followed by little-endian f64 in pack order.
pub fn write_snapshot(x: &StateVector, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(x.grid().nx as u32).to_le_bytes())?;
    w.write_all(&(x.grid().ny as u32).to_le_bytes())?;
    for v in x.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot. The domain size is not stored and is taken from `lx`, `ly`.
pub fn read_snapshot(path: impl AsRef<Path>, lx: f64, ly: f64) -> Result<StateVector> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(Error::Truncated { expected: 16, found: bytes.len() as u64 });
    }
    if &bytes[0..4] != SNAPSHOT_MAGIC {
        return Err(Error::Version("not a state snapshot (bad magic)".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
    let version = word(4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Version(format!("unsupported snapshot version {version}")));
    }
    let grid = GridSpec::new(word(8) as usize, word(12) as usize, lx, ly)?;
    let expected = 16 + 8 * grid.state_len() as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated { expected, found: bytes.len() as u64 });
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    StateVector::from_vec(data, grid)
}

/// Per-channel affine normalisation used by [`to_image`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScales {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for ChannelScales {
    fn default() -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3] }
    }
}

impl ChannelScales {
    /// Measures channel mean and standard deviation over a set of states.
    pub fn measure<'a>(states: impl IntoIterator<Item = &'a StateVector>) -> Self {
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut count = [0usize; 3];
        for x in states {
            for (c, field) in [x.eta(), x.u(), x.v()].into_iter().enumerate() {
                for &v in field {
                    sum[c] += v;
                    sq[c] += v * v;
                }
                count[c] += field.len();
            }
        }
        let mut out = Self::default();
        for c in 0..3 {
            if count[c] == 0 {
                continue;
            }
            let n = count[c] as f64;
            let mean = sum[c] / n;
            let var = (sq[c] / n - mean * mean).max(0.0);
            out.mean[c] = mean;
            out.std[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        out
    }
}

/// Image view of a state: `nx * ny * 3` values laid out as `[(i * ny + j) * 3 + c]`.
///
/// `u` gets an extra eastmost row and `v` an extra northmost column, both
/// copied from the adjacent interior row.
pub fn to_image(x: &StateVector, scales: &ChannelScales) -> Vec<f64> {
    let g = x.grid();
    let (nx, ny) = (g.nx, g.ny);
    let (eta, u, v) = (x.eta(), x.u(), x.v());
    let mut img = vec![0.0; nx * ny * 3];
    for i in 0..nx {
        for j in 0..ny {
            let iu = i.min(nx - 2);
            let jv = j.min(ny - 2);
            let px = &mut img[(i * ny + j) * 3..(i * ny + j) * 3 + 3];
            px[0] = (eta[i * ny + j] - scales.mean[0]) / scales.std[0];
            px[1] = (u[iu * ny + j] - scales.mean[1]) / scales.std[1];
            px[2] = (v[i * (ny - 1) + jv] - scales.mean[2]) / scales.std[2];
        }
    }
    img
}
