use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linop::{dot, norm2};

pub const EIGS_MAGIC: &[u8; 4] = b"EIGS";
pub const EIGS_VERSION: u32 = 1;

/// Orthonormality tolerance on `max |U^T U - I|`.
const ORTHO_TOL: f64 = 1e-8;

/// `r` orthonormal vectors of length `n` with positive, non-increasing values.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenpairSet {
    n: usize,
    /// Column-major `n x r`.
    vectors: Vec<f64>,
    values: Vec<f64>,
}

impl EigenpairSet {
    pub fn new(n: usize, vectors: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = Self { n, vectors, values };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(n: usize) -> Self {
        Self { n, vectors: vec![], values: vec![] }
    }

    /// Builds from a matrix whose columns are the vectors.
    pub fn from_matrix(u: &DMatrix<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(u.nrows(), u.as_slice().to_vec(), values)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.values.len();
        if self.vectors.len() != self.n * r {
            return Err(Error::Eigenpairs(format!(
                "{} vector entries for n = {}, r = {r}",
                self.vectors.len(),
                self.n
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Eigenpairs(format!("non-positive eigenvalue {v}")));
        }
        if self.values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Eigenpairs("eigenvalues must be non-increasing".into()));
        }
        let err = self.orthonormality_error();
        if err > ORTHO_TOL {
            return Err(Error::Eigenpairs(format!("columns not orthonormal (error {err:e})")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }

    pub fn vectors_col_major(&self) -> &[f64] {
        &self.vectors
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.rank(), &self.vectors)
    }

    /// `max |U^T U - I|`
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.rank();
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in 0..=i {
                let g = dot(self.vector(i), self.vector(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Keeps the leading `r` pairs.
    pub fn truncate(&self, r: usize) -> Self {
        let r = r.min(self.rank());
        Self {
            n: self.n,
            vectors: self.vectors[..r * self.n].to_vec(),
            values: self.values[..r].to_vec(),
        }
    }

    /// Same vectors with replaced values (re-sorted jointly if needed).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        assert_eq!(values.len(), self.rank(), "value count");
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for &k in &order {
            vectors.extend_from_slice(self.vector(k));
        }
        Self::new(self.n, vectors, order.iter().map(|&k| values[k]).collect())
    }

    /// Flips each vector so that its largest-magnitude entry is positive.
    pub fn canonicalize_signs(&mut self) {
        let n = self.n;
        for col in self.vectors.chunks_mut(n) {
            let (mut best, mut idx) = (0.0f64, 0);
            for (k, v) in col.iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    idx = k;
                }
            }
            if col[idx] < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    /// `||A u_i - lambda_i u_i||_2` for each pair.
    pub fn residuals(&self, apply: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        (0..self.rank())
            .map(|i| {
                let u = self.vector(i);
                let au = apply(u);
                let r: Vec<f64> = au.iter().zip(u).map(|(a, b)| a - self.values[i] * b).collect();
                norm2(&r)
            })
            .collect()
    }
}

/// Header `EIGS`, version, n, r (u32 each), then lambda and U column-major,
/// all little-endian f64.
pub fn write_eigenpairs(set: &EigenpairSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EIGS_MAGIC)?;
    w.write_all(&EIGS_VERSION.to_le_bytes())?;
    w.write_all(&(set.n as u32).to_le_bytes())?;
    w.write_all(&(set.rank() as u32).to_le_bytes())?;
    for v in set.values.iter().chain(&set.vectors) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eigenpairs(path: impl AsRef<Path>) -> Result<EigenpairSet> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(Error::Truncated { expected: 16, found: bytes.len() as u64 });
    }
    if &bytes[..4] != EIGS_MAGIC {
        return Err(Error::Version("not an eigenpair file (bad magic)".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
    if word(4) as u32 != EIGS_VERSION {
        return Err(Error::Version(format!("unsupported eigenpair file version {}", word(4))));
    }
    let (n, r) = (word(8), word(12));
    let expected = 16 + 8 * (r + n * r) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated { expected, found: bytes.len() as u64 });
    }
    let mut floats =
        bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let values: Vec<f64> = floats.by_ref().take(r).collect();
    let vectors: Vec<f64> = floats.collect();
    EigenpairSet::new(n, vectors, values)
}
