//! Bit-exact frame encoding.
//!
//! ```text
//! magic u16 LE (0xFE1B) | msg_type u8 | round u32 LE | client_id u32 LE | payload_len u64 LE | payload
//! ```
//!
//! The payload is a sequence of arrays, each `rows u32 LE | cols u32 LE`
//! followed by `rows * cols` IEEE-754 f64 values, little-endian, row-major.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

pub const MAGIC: u16 = 0xFE1B;
pub const HEADER_BYTES: usize = 19;
pub const ARRAY_PREFIX_BYTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Upload = 0,
    Broadcast = 1,
    Scalar = 2,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(MsgType::Upload),
            1 => Ok(MsgType::Broadcast),
            2 => Ok(MsgType::Scalar),
            _ => Err(Error::Frame("unknown message type")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: MsgType,
    pub round: u32,
    pub client_id: u32,
    pub payload_len: u64,
}

/// Encodes a frame from row-major arrays.
pub fn encode_frame(
    msg_type: MsgType,
    round: u32,
    client_id: u32,
    arrays: &[&DMatrix<f64>],
) -> Vec<u8> {
    let payload_len: usize = arrays
        .iter()
        .map(|a| ARRAY_PREFIX_BYTES + 8 * a.len())
        .sum();
    let mut out = Vec::with_capacity(HEADER_BYTES + payload_len);
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.push(msg_type as u8);
    out.extend_from_slice(&round.to_le_bytes());
    out.extend_from_slice(&client_id.to_le_bytes());
    out.extend_from_slice(&(payload_len as u64).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(a.ncols() as u32).to_le_bytes());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out.extend_from_slice(&a[(i, j)].to_le_bytes());
            }
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_header(bytes: &[u8]) -> Result<FrameHeader> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Frame("truncated header"));
    }
    if u16::from_le_bytes([bytes[0], bytes[1]]) != MAGIC {
        return Err(Error::Frame("bad magic"));
    }
    let msg_type = MsgType::from_byte(bytes[2])?;
    let round = read_u32(bytes, 3);
    let client_id = read_u32(bytes, 7);
    let payload_len = u64::from_le_bytes(bytes[11..19].try_into().expect("8 bytes"));
    if bytes.len() as u64 != HEADER_BYTES as u64 + payload_len {
        return Err(Error::Frame("payload length does not match frame size"));
    }
    Ok(FrameHeader {
        msg_type,
        round,
        client_id,
        payload_len,
    })
}

/// Walks the payload, returning `(rows, cols, byte offset of the data)` per array.
fn array_layout(bytes: &[u8]) -> Result<Vec<(usize, usize, usize)>> {
    let mut at = HEADER_BYTES;
    let mut out = Vec::new();
    while at < bytes.len() {
        if bytes.len() - at < ARRAY_PREFIX_BYTES {
            return Err(Error::Frame("truncated array prefix"));
        }
        let rows = read_u32(bytes, at) as usize;
        let cols = read_u32(bytes, at + 4) as usize;
        let data = at + ARRAY_PREFIX_BYTES;
        let len = rows
            .checked_mul(cols)
            .and_then(|k| k.checked_mul(8))
            .ok_or(Error::Frame("array size overflow"))?;
        if bytes.len() - data < len {
            return Err(Error::Frame("truncated array data"));
        }
        out.push((rows, cols, data));
        at = data + len;
    }
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<(FrameHeader, Vec<DMatrix<f64>>)> {
    let header = decode_header(bytes)?;
    let arrays = array_layout(bytes)?
        .into_iter()
        .map(|(rows, cols, data)| {
            DMatrix::from_fn(rows, cols, |i, j| {
                let at = data + 8 * (i * cols + j);
                f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
            })
        })
        .collect();
    Ok((header, arrays))
}

/// Number of f64 values carried by a frame (shape prefixes and header excluded).
pub fn data_words(bytes: &[u8]) -> Result<u64> {
    decode_header(bytes)?;
    Ok(array_layout(bytes)?
        .iter()
        .map(|(r, c, _)| (r * c) as u64)
        .sum())
}
