//! Checkpoint layout, little-endian:
//! `"SURR"`, version `u32`, `n u32`, `r u32`, `M f64`, descriptor length `u32`,
//! descriptor (JSON of [`SurrogateConfig`]), parameter count `u64`, `theta`,
//! Adam step `u64`, then both moment vectors when the step is non-zero.

use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AdamState, Surrogate, SurrogateConfig, SurrogateParams};
use crate::error::{Error, Result};

pub const SURR_MAGIC: &[u8; 4] = b"SURR";
pub const SURR_VERSION: u32 = 1;

pub fn write_checkpoint(s: &Surrogate, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let cfg = s.config();
    let desc = serde_json::to_vec(cfg)?;
    w.write_all(SURR_MAGIC)?;
    w.write_all(&SURR_VERSION.to_le_bytes())?;
    w.write_all(&(s.n() as u32).to_le_bytes())?;
    w.write_all(&(cfg.r as u32).to_le_bytes())?;
    w.write_all(&cfg.m_bound.to_le_bytes())?;
    w.write_all(&(desc.len() as u32).to_le_bytes())?;
    w.write_all(&desc)?;
    let p = s.params();
    w.write_all(&(p.theta.len() as u64).to_le_bytes())?;
    write_f64s(&mut w, &p.theta)?;
    w.write_all(&p.adam.t.to_le_bytes())?;
    if p.adam.t > 0 {
        write_f64s(&mut w, &p.adam.m)?;
        write_f64s(&mut w, &p.adam.v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Surrogate> {
    let bytes = std::fs::read(path)?;
    let mut r = Cursor { bytes: &bytes, pos: 0 };
    if r.take(4)? != SURR_MAGIC {
        return Err(Error::Version("not a surrogate checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != SURR_VERSION {
        return Err(Error::Version(format!("checkpoint version {version}, expected {SURR_VERSION}")));
    }
    let n = r.u32()? as usize;
    let rank = r.u32()? as usize;
    let m_bound = f64::from_bits(r.u64()?);
    let desc_len = r.u32()? as usize;
    let config: SurrogateConfig = serde_json::from_slice(r.take(desc_len)?)?;
    if config.grid.state_len() != n || config.r != rank || config.m_bound.to_bits() != m_bound.to_bits() {
        return Err(Error::Shape("checkpoint header disagrees with its descriptor".into()));
    }
    let count = r.u64()? as usize;
    let theta = r.f64s(count)?;
    let t = r.u64()?;
    let adam = if t > 0 { AdamState { m: r.f64s(count)?, v: r.f64s(count)?, t } } else { AdamState::new(count) };
    Surrogate::from_parts(config, SurrogateParams { theta, adam })
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            expected: (self.pos as u64).saturating_add(len as u64),
            found: self.bytes.len() as u64,
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count.checked_mul(8).ok_or_else(|| Error::Shape("parameter count overflows".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
