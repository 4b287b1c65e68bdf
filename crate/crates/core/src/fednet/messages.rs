//! Typed protocol messages and their frame schemas.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::wire::{decode_frame, encode_frame, MsgType};
use crate::{Error, Result};

/// Client to server, once per round.
///
/// With client-side completion `h` carries `W_i^{1/2} h_i`; with server-assisted
/// completion it carries the raw `h_i` and `h_scaled` carries `W_i^{1/2} h_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpload {
    pub round: u32,
    pub client_id: u32,
    /// `W_i^{1/2} A_i^T R_1^T`, `n_i x b1`.
    pub u: DMatrix<f64>,
    /// `R_2 A_i W_i A_i^T R_3^T`, `b2 x b3`.
    pub m: DMatrix<f64>,
    /// `R_4 A_i W_i^{1/2}`, `b4 x n_i`.
    pub v: DMatrix<f64>,
    pub h: DVector<f64>,
    pub h_scaled: Option<DVector<f64>>,
}

/// Server to client: the client's slices of `W^{-1/2} δx` and `W^{1/2} δs`
/// (or the full vectors in full-broadcast mode) and the next path parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerBroadcast {
    pub round: u32,
    pub client_id: u32,
    pub dx_pre: DVector<f64>,
    pub ds_pre: DVector<f64>,
    pub t_tilde: f64,
}

/// Control-channel scalars (damping counts, normalizers, setup values).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMessage {
    pub round: u32,
    pub client_id: u32,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Upload(ClientUpload),
    Broadcast(ServerBroadcast),
    Scalar(ScalarMessage),
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn as_vector(m: DMatrix<f64>, what: &'static str) -> Result<DVector<f64>> {
    if m.ncols() != 1 {
        return Err(Error::Frame(what));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

impl Message {
    pub fn round(&self) -> u32 {
        match self {
            Message::Upload(m) => m.round,
            Message::Broadcast(m) => m.round,
            Message::Scalar(m) => m.round,
        }
    }

    pub fn client_id(&self) -> u32 {
        match self {
            Message::Upload(m) => m.client_id,
            Message::Broadcast(m) => m.client_id,
            Message::Scalar(m) => m.client_id,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::Upload(up) => {
                let h = column(&up.h);
                match &up.h_scaled {
                    None => encode_frame(MsgType::Upload, up.round, up.client_id, &[&up.u, &up.m, &up.v, &h]),
                    Some(hs) => {
                        let hs = column(hs);
                        encode_frame(MsgType::Upload, up.round, up.client_id, &[&up.u, &up.m, &up.v, &h, &hs])
                    }
                }
            }
            Message::Broadcast(b) => {
                let t = DMatrix::from_element(1, 1, b.t_tilde);
                encode_frame(
                    MsgType::Broadcast,
                    b.round,
                    b.client_id,
                    &[&column(&b.dx_pre), &column(&b.ds_pre), &t],
                )
            }
            Message::Scalar(s) => {
                let v = DMatrix::from_column_slice(s.values.len(), 1, &s.values);
                encode_frame(MsgType::Scalar, s.round, s.client_id, &[&v])
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, arrays) = decode_frame(bytes)?;
        let (round, client_id) = (header.round, header.client_id);
        let mut it = arrays.into_iter();
        let msg = match header.msg_type {
            MsgType::Upload => {
                let (Some(u), Some(m), Some(v), Some(h)) = (it.next(), it.next(), it.next(), it.next()) else {
                    return Err(Error::Frame("upload needs four arrays"));
                };
                let h_scaled = it.next().map(|a| as_vector(a, "upload h_scaled must be a column")).transpose()?;
                let h = as_vector(h, "upload h must be a column")?;
                if u.nrows() != h.len() || v.ncols() != h.len() {
                    return Err(Error::Frame("upload shapes disagree on n_i"));
                }
                Message::Upload(ClientUpload {
                    round,
                    client_id,
                    u,
                    m,
                    v,
                    h,
                    h_scaled,
                })
            }
            MsgType::Broadcast => {
                let (Some(p), Some(q), Some(t)) = (it.next(), it.next(), it.next()) else {
                    return Err(Error::Frame("broadcast needs three arrays"));
                };
                if t.shape() != (1, 1) {
                    return Err(Error::Frame("broadcast t must be 1 x 1"));
                }
                Message::Broadcast(ServerBroadcast {
                    round,
                    client_id,
                    dx_pre: as_vector(p, "broadcast dx must be a column")?,
                    ds_pre: as_vector(q, "broadcast ds must be a column")?,
                    t_tilde: t[(0, 0)],
                })
            }
            MsgType::Scalar => {
                let Some(v) = it.next() else {
                    return Err(Error::Frame("scalar message needs one array"));
                };
                Message::Scalar(ScalarMessage {
                    round,
                    client_id,
                    values: as_vector(v, "scalar payload must be a column")?.as_slice().to_vec(),
                })
            }
        };
        if it.next().is_some() {
            return Err(Error::Frame("unexpected trailing array"));
        }
        Ok(msg)
    }
}
