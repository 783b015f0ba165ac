//! Product quantization of token embeddings.
//!
//! A `D`-dimensional token is split into `D / d` contiguous subspaces of
//! dimension `d`. Each subspace has its own codebook of `K <= 256` centroids,
//! so one token is stored as `D / d` single-byte centroid indices.

use std::path::Path;

use rayon::prelude::*;

use crate::bytes::{PutLe, Reader};
use crate::error::{Error, Result};
use crate::kmeans::{self, kmeans};
use crate::types::{squared_l2, TokenGrid};

pub const DEFAULT_CENTROIDS: usize = 256;
pub const CODEBOOK_MAGIC: [u8; 4] = *b"PQCB";
pub const CODEBOOK_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebooks {
    dim: usize,
    sub_dim: usize,
    centroids_per_subspace: usize,
    /// `(subspace, centroid, component)` order.
    centroids: Vec<f32>,
    trained_on: u64,
}

/// Per-token codes: `len() x num_subspaces` bytes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqCodes {
    codes: Vec<u8>,
    num_subspaces: usize,
}

impl PqCodebooks {
    pub fn from_parts(
        dim: usize,
        sub_dim: usize,
        centroids_per_subspace: usize,
        centroids: Vec<f32>,
        trained_on: u64,
    ) -> Result<Self> {
        check_split(dim, sub_dim)?;
        if !(1..=256).contains(&centroids_per_subspace) {
            return Err(Error::InvalidParameter(format!(
                "centroids per subspace must be in 1..=256, got {centroids_per_subspace}"
            )));
        }
        if centroids.len() != dim * centroids_per_subspace {
            return Err(Error::InvalidParameter(format!(
                "expected {} centroid values, got {}",
                dim * centroids_per_subspace,
                centroids.len()
            )));
        }
        Ok(Self {
            dim,
            sub_dim,
            centroids_per_subspace,
            centroids,
            trained_on,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn num_subspaces(&self) -> usize {
        self.dim / self.sub_dim
    }

    pub fn centroids_per_subspace(&self) -> usize {
        self.centroids_per_subspace
    }

    pub fn trained_on(&self) -> u64 {
        self.trained_on
    }

    /// Centroid `c` of subspace `s`.
    pub fn centroid(&self, s: usize, c: usize) -> &[f32] {
        let start = (s * self.centroids_per_subspace + c) * self.sub_dim;
        &self.centroids[start..start + self.sub_dim]
    }

    fn subspace(&self, s: usize) -> &[f32] {
        let len = self.centroids_per_subspace * self.sub_dim;
        &self.centroids[s * len..(s + 1) * len]
    }

    /// Nearest-centroid code of one vector.
    pub fn encode_vector(&self, v: &[f32], out: &mut [u8]) {
        for (s, (chunk, code)) in v.chunks_exact(self.sub_dim).zip(out).enumerate() {
            *code = kmeans::nearest(chunk, self.subspace(s), self.sub_dim).0 as u8;
        }
    }

    pub fn decode_vector(&self, codes: &[u8], out: &mut [f32]) -> Result<()> {
        for (s, (&code, dst)) in codes
            .iter()
            .zip(out.chunks_exact_mut(self.sub_dim))
            .enumerate()
        {
            if code as usize >= self.centroids_per_subspace {
                return Err(Error::CodeOutOfRange {
                    code,
                    centroids: self.centroids_per_subspace,
                });
            }
            dst.copy_from_slice(self.centroid(s, code as usize));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(26 + self.centroids.len() * 4);
        out.extend_from_slice(&CODEBOOK_MAGIC);
        out.put_u16(CODEBOOK_VERSION);
        out.put_u32(self.dim as u32);
        out.put_u32(self.sub_dim as u32);
        out.put_u32(self.centroids_per_subspace as u32);
        out.put_u64(self.trained_on);
        out.put_f32s(&self.centroids);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.array::<4>()? != CODEBOOK_MAGIC {
            return Err(Error::BadMagic {
                expected: CODEBOOK_MAGIC,
            });
        }
        let version = r.u16()?;
        if version != CODEBOOK_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = r.u32()? as usize;
        let sub_dim = r.u32()? as usize;
        let k = r.u32()? as usize;
        let trained_on = r.u64()?;
        let n = dim
            .checked_mul(k)
            .ok_or_else(|| Error::Corrupt("codebook size".into()))?;
        if n.saturating_mul(4) != r.remaining() {
            return Err(Error::Corrupt(format!(
                "codebook body is {} bytes, header implies {}",
                r.remaining(),
                n.saturating_mul(4)
            )));
        }
        let centroids = r.f32s(n)?;
        Self::from_parts(dim, sub_dim, k, centroids, trained_on)
            .map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl PqCodes {
    pub fn len(&self) -> usize {
        self.codes.len() / self.num_subspaces
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn num_subspaces(&self) -> usize {
        self.num_subspaces
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.codes
    }

    pub fn token(&self, i: usize) -> &[u8] {
        &self.codes[i * self.num_subspaces..(i + 1) * self.num_subspaces]
    }

    pub fn from_bytes(codes: Vec<u8>, num_subspaces: usize) -> Result<Self> {
        if num_subspaces == 0 || !codes.len().is_multiple_of(num_subspaces) {
            return Err(Error::InvalidParameter(
                "code buffer is not a whole number of tokens".into(),
            ));
        }
        Ok(Self {
            codes,
            num_subspaces,
        })
    }
}

fn check_split(dim: usize, sub_dim: usize) -> Result<()> {
    if sub_dim == 0 || dim == 0 || !dim.is_multiple_of(sub_dim) {
        return Err(Error::IndivisibleDimension { dim, sub: sub_dim });
    }
    Ok(())
}

/// Trains one k-means codebook per subspace on `vectors` (`N x dim`).
///
/// Subspace `s` is seeded with `seed + s` so subspaces are independent yet
/// reproducible.
pub fn train_codebooks(
    vectors: &[f32],
    dim: usize,
    sub_dim: usize,
    centroids_per_subspace: usize,
    seed: u64,
) -> Result<PqCodebooks> {
    check_split(dim, sub_dim)?;
    if !vectors.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(
            "training buffer is not a whole number of vectors".into(),
        ));
    }
    let n = vectors.len() / dim;
    if !(1..=256).contains(&centroids_per_subspace) {
        return Err(Error::InvalidParameter(format!(
            "centroids per subspace must be in 1..=256, got {centroids_per_subspace}"
        )));
    }
    if n < centroids_per_subspace {
        return Err(Error::TooFewVectors {
            needed: centroids_per_subspace,
            got: n,
        });
    }
    let num_subspaces = dim / sub_dim;
    let per_subspace: Vec<Vec<f32>> = (0..num_subspaces)
        .into_par_iter()
        .map(|s| {
            let projected: Vec<f32> = vectors
                .chunks_exact(dim)
                .flat_map(|v| &v[s * sub_dim..(s + 1) * sub_dim])
                .copied()
                .collect();
            kmeans(
                &projected,
                sub_dim,
                centroids_per_subspace,
                seed.wrapping_add(s as u64),
            )
            .map(|km| km.centroids)
        })
        .collect::<Result<_>>()?;
    PqCodebooks::from_parts(
        dim,
        sub_dim,
        centroids_per_subspace,
        per_subspace.concat(),
        n as u64,
    )
}

pub fn encode(grid: &TokenGrid, cb: &PqCodebooks) -> Result<PqCodes> {
    if grid.dim() != cb.dim {
        return Err(Error::DimensionMismatch {
            expected: cb.dim,
            found: grid.dim(),
        });
    }
    let ns = cb.num_subspaces();
    let mut codes = vec![0u8; grid.len() * ns];
    codes
        .par_chunks_exact_mut(ns)
        .zip(grid.as_slice().par_chunks_exact(cb.dim))
        .for_each(|(out, v)| cb.encode_vector(v, out));
    Ok(PqCodes {
        codes,
        num_subspaces: ns,
    })
}

/// Reconstructs token vectors by concatenating the selected centroids.
pub fn reconstruct(codes: &PqCodes, cb: &PqCodebooks) -> Result<Vec<f32>> {
    if codes.num_subspaces != cb.num_subspaces() {
        return Err(Error::DimensionMismatch {
            expected: cb.num_subspaces(),
            found: codes.num_subspaces,
        });
    }
    let mut out = vec![0f32; codes.len() * cb.dim];
    for (c, dst) in codes
        .codes
        .chunks_exact(codes.num_subspaces)
        .zip(out.chunks_exact_mut(cb.dim))
    {
        cb.decode_vector(c, dst)?;
    }
    Ok(out)
}

/// Mean squared reconstruction error `||x - x_hat||^2` over the rows of `vectors`.
pub fn mean_reconstruction_error(vectors: &[f32], cb: &PqCodebooks) -> f64 {
    let dim = cb.dim;
    let n = vectors.len() / dim;
    if n == 0 {
        return 0.0;
    }
    let total: f64 = vectors
        .par_chunks_exact(dim)
        .map(|v| {
            let mut code = vec![0u8; cb.num_subspaces()];
            cb.encode_vector(v, &mut code);
            let mut rec = vec![0f32; dim];
            cb.decode_vector(&code, &mut rec)
                .expect("codes from encode are in range");
            squared_l2(v, &rec)
        })
        .sum();
    total / n as f64
}
