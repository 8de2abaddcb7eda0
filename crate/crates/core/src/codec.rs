//! Systematic (n, k) erasure coding over GF(2^8).
//!
//! The generator matrix is the n x k Vandermonde matrix over evaluation
//! points 0..n, right-multiplied by the inverse of its top k x k square so
//! the first k output chunks are the payload itself. Every k x k submatrix
//! of a Vandermonde matrix over distinct points is invertible and that
//! property survives the normalization, so any k of the n chunks
//! reconstruct the payload exactly.
//!
//! Payloads are padded with a 0x01 terminator plus zeros up to a multiple
//! of k, so decode can strip padding without an out-of-band length.

use crate::gf256;
use thiserror::Error;

/// Chunk counts for one encoding: n total chunks, any k reconstruct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecParams {
    pub n: usize,
    pub k: usize,
}

impl CodecParams {
    pub fn new(n: usize, k: usize) -> Result<Self, CodecError> {
        if k == 0 || k > n || n > 255 {
            return Err(CodecError::BadParams { n, k });
        }
        Ok(CodecParams { n, k })
    }
}

/// One coded chunk; `index` is its 0-based position among the n outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid codec parameters n={n} k={k} (need 1 <= k <= n <= 255)")]
    BadParams { n: usize, k: usize },
    #[error("need {need} chunks to decode, have {have} distinct")]
    NotEnoughChunks { have: usize, need: usize },
    #[error("chunk lengths are inconsistent")]
    MismatchedLengths,
    #[error("chunk index {0} out of range")]
    IndexOutOfRange(u32),
    #[error("decoded payload has no valid padding terminator")]
    BadPadding,
}

fn vandermonde_row(i: usize, k: usize) -> Vec<u8> {
    (0..k).map(|j| gf256::pow(i as u8, j as u32)).collect()
}

/// Gauss-Jordan inversion over GF(2^8). Panics on a singular matrix, which
/// cannot happen for the submatrices produced here.
fn invert(m: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let k = m.len();
    let mut a: Vec<Vec<u8>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.resize(2 * k, 0);
            row[k + i] = 1;
            row
        })
        .collect();
    for col in 0..k {
        let piv = (col..k)
            .find(|&r| a[r][col] != 0)
            .expect("Vandermonde submatrix must be invertible");
        a.swap(col, piv);
        let pinv = gf256::inv(a[col][col]);
        for j in 0..2 * k {
            a[col][j] = gf256::mul(a[col][j], pinv);
        }
        for r in 0..k {
            if r != col && a[r][col] != 0 {
                let f = a[r][col];
                for j in 0..2 * k {
                    a[r][j] ^= gf256::mul(f, a[col][j]);
                }
            }
        }
    }
    a.into_iter().map(|row| row[k..].to_vec()).collect()
}

/// Row r of the normalized (systematic) generator matrix.
fn generator_row(params: CodecParams, r: usize, top_inv: &[Vec<u8>]) -> Vec<u8> {
    let v = vandermonde_row(r, params.k);
    (0..params.k)
        .map(|j| {
            (0..params.k).fold(0u8, |acc, t| acc ^ gf256::mul(v[t], top_inv[t][j]))
        })
        .collect()
}

fn top_inverse(params: CodecParams) -> Vec<Vec<u8>> {
    let top: Vec<Vec<u8>> = (0..params.k).map(|i| vandermonde_row(i, params.k)).collect();
    invert(&top)
}

fn pad(payload: &[u8], k: usize) -> Vec<u8> {
    let mut padded = payload.to_vec();
    padded.push(0x01);
    while padded.len() % k != 0 {
        padded.push(0x00);
    }
    padded
}

fn unpad(mut padded: Vec<u8>) -> Result<Vec<u8>, CodecError> {
    while let Some(&b) = padded.last() {
        padded.pop();
        match b {
            0x00 => continue,
            0x01 => return Ok(padded),
            _ => return Err(CodecError::BadPadding),
        }
    }
    Err(CodecError::BadPadding)
}

/// Split the payload into n chunks of which the first k are the (padded)
/// payload itself and the rest are parity.
pub fn encode(params: CodecParams, payload: &[u8]) -> Vec<Chunk> {
    let padded = pad(payload, params.k);
    let clen = padded.len() / params.k;
    let data: Vec<&[u8]> = padded.chunks(clen).collect();
    let mut out: Vec<Chunk> = data
        .iter()
        .enumerate()
        .map(|(i, d)| Chunk { index: i as u32, data: d.to_vec() })
        .collect();
    let top_inv = top_inverse(params);
    for r in params.k..params.n {
        let row = generator_row(params, r, &top_inv);
        let mut chunk = vec![0u8; clen];
        for (j, d) in data.iter().enumerate() {
            let coef = row[j];
            if coef == 0 {
                continue;
            }
            for (b, &byte) in d.iter().enumerate() {
                chunk[b] ^= gf256::mul(coef, byte);
            }
        }
        out.push(Chunk { index: r as u32, data: chunk });
    }
    out
}

/// Reconstruct the payload from any k distinct chunks. Duplicate indices
/// collapse to one; extra chunks beyond k are ignored (lowest indices win).
pub fn decode(params: CodecParams, chunks: &[Chunk]) -> Result<Vec<u8>, CodecError> {
    let mut seen: Vec<&Chunk> = Vec::new();
    for c in chunks {
        if c.index as usize >= params.n {
            return Err(CodecError::IndexOutOfRange(c.index));
        }
        if !seen.iter().any(|s| s.index == c.index) {
            seen.push(c);
        }
    }
    if seen.len() < params.k {
        return Err(CodecError::NotEnoughChunks { have: seen.len(), need: params.k });
    }
    seen.sort_by_key(|c| c.index);
    seen.truncate(params.k);
    let clen = seen[0].data.len();
    if clen == 0 || seen.iter().any(|c| c.data.len() != clen) {
        return Err(CodecError::MismatchedLengths);
    }

    let top_inv = top_inverse(params);
    let rows: Vec<Vec<u8>> = seen
        .iter()
        .map(|c| generator_row(params, c.index as usize, &top_inv))
        .collect();
    let rows_inv = invert(&rows);

    let mut padded = vec![0u8; clen * params.k];
    for (j, out) in padded.chunks_mut(clen).enumerate() {
        for (t, c) in seen.iter().enumerate() {
            let coef = rows_inv[j][t];
            if coef == 0 {
                continue;
            }
            for (b, &byte) in c.data.iter().enumerate() {
                out[b] ^= gf256::mul(coef, byte);
            }
        }
    }
    unpad(padded)
}

/// Chunk length produced by `encode` for a payload of `len` bytes.
pub fn chunk_len(params: CodecParams, len: usize) -> usize {
    let padded = len + 1;
    padded.div_ceil(params.k)
}
