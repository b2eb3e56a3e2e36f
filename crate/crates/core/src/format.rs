//! Binary tensor files.
//!
//! Every file starts with a 16-byte header: the magic `SVPP`, the rank as a
//! little-endian `u32`, then four little-endian `u16` extents (unused trailing
//! extents are zero). The payload follows as little-endian 4-byte elements in
//! row-major order. Sparse point files use rank 1 with extent 0 to mark a
//! variable-length payload of 16-byte `(u32 frame, u32 row, u32 col, f32 dist)`
//! records whose count follows from the file length.

use crate::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"SVPP";
pub const HEADER_LEN: usize = 16;
const SPARSE_RECORD: usize = 16;

/// One depth sample on the pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsePoint {
    pub frame: u32,
    pub row: u32,
    pub col: u32,
    pub dist: f32,
}

fn header(shape: &[usize]) -> Result<[u8; HEADER_LEN]> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::format("tensor header", format!("rank {} not in 1..=4", shape.len())));
    }
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(TENSOR_MAGIC);
    h[4..8].copy_from_slice(&(shape.len() as u32).to_le_bytes());
    for (i, &e) in shape.iter().enumerate() {
        let e = u16::try_from(e)
            .map_err(|_| Error::format("tensor header", format!("extent {e} exceeds 65535")))?;
        h[8 + 2 * i..10 + 2 * i].copy_from_slice(&e.to_le_bytes());
    }
    Ok(h)
}

/// Parses a header, returning the extents (empty for the variable-length
/// marker).
fn parse_header(bytes: &[u8]) -> Result<Vec<usize>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("tensor header", format!("{} bytes, need 16", bytes.len())));
    }
    if &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::format("tensor header", "bad magic"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::format("tensor header", format!("rank {rank} not in 1..=4")));
    }
    let ext: Vec<usize> = (0..4)
        .map(|i| u16::from_le_bytes([bytes[8 + 2 * i], bytes[9 + 2 * i]]) as usize)
        .collect();
    if ext[rank..].iter().any(|&e| e != 0) {
        return Err(Error::format("tensor header", "nonzero extent beyond rank"));
    }
    if rank == 1 && ext[0] == 0 {
        return Ok(Vec::new());
    }
    if ext[..rank].contains(&0) {
        return Err(Error::format("tensor header", "zero extent"));
    }
    Ok(ext[..rank].to_vec())
}

fn encode_words(shape: &[usize], len: usize, words: impl Iterator<Item = [u8; 4]>) -> Result<Vec<u8>> {
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(Error::Contract(format!("shape {shape:?} holds {expected} elements, got {len}")));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * len);
    out.extend_from_slice(&header(shape)?);
    for w in words {
        out.extend_from_slice(&w);
    }
    Ok(out)
}

fn decode_words(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    let shape = parse_header(bytes)?;
    if shape.is_empty() {
        return Err(Error::format("tensor", "variable-length marker in a dense tensor file"));
    }
    let n: usize = shape.iter().product();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * n {
        return Err(Error::format(
            "tensor",
            format!("shape {shape:?} needs {} payload bytes, found {}", 4 * n, payload.len()),
        ));
    }
    Ok((shape, payload))
}

pub fn encode_f32(shape: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    encode_words(shape, data.len(), data.iter().map(|v| v.to_le_bytes()))
}

pub fn encode_i32(shape: &[usize], data: &[i32]) -> Result<Vec<u8>> {
    encode_words(shape, data.len(), data.iter().map(|v| v.to_le_bytes()))
}

pub fn decode_f32(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>)> {
    let (shape, payload) = decode_words(bytes)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}

pub fn decode_i32(bytes: &[u8]) -> Result<(Vec<usize>, Vec<i32>)> {
    let (shape, payload) = decode_words(bytes)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}

pub fn encode_sparse(points: &[SparsePoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + SPARSE_RECORD * points.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for p in points {
        out.extend_from_slice(&p.frame.to_le_bytes());
        out.extend_from_slice(&p.row.to_le_bytes());
        out.extend_from_slice(&p.col.to_le_bytes());
        out.extend_from_slice(&p.dist.to_le_bytes());
    }
    out
}

pub fn decode_sparse(bytes: &[u8]) -> Result<Vec<SparsePoint>> {
    if !parse_header(bytes)?.is_empty() {
        return Err(Error::format("sparse points", "header is not the variable-length marker"));
    }
    let payload = &bytes[HEADER_LEN..];
    if !payload.len().is_multiple_of(SPARSE_RECORD) {
        return Err(Error::format(
            "sparse points",
            format!("{} payload bytes is not a whole number of records", payload.len()),
        ));
    }
    Ok(payload
        .chunks_exact(SPARSE_RECORD)
        .map(|r| {
            let word = |i: usize| r[4 * i..4 * i + 4].try_into().unwrap();
            SparsePoint {
                frame: u32::from_le_bytes(word(0)),
                row: u32::from_le_bytes(word(1)),
                col: u32::from_le_bytes(word(2)),
                dist: f32::from_le_bytes(word(3)),
            }
        })
        .collect())
}
