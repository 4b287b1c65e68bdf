//! How the server reaches its clients.

use alloc::vec::Vec;

use super::client::{ClientSnapshot, ClientState};
use super::wire::decode_header;
use crate::{Error, Result};

/// A set of clients addressed by id.
///
/// `exchange` delivers one frame per client and returns the replies in any
/// order. `observe` is an out-of-band view used for traces and final output.
pub trait ClientPool {
    fn client_ids(&self) -> Vec<u32>;
    fn exchange(&mut self, frames: Vec<(u32, Vec<u8>)>) -> Result<Vec<Vec<u8>>>;
    fn observe(&mut self) -> Result<Vec<ClientSnapshot>>;
}

/// Clients called synchronously in the current thread.
#[derive(Debug, Clone)]
pub struct InProcessPool {
    clients: Vec<ClientState>,
    reverse_replies: bool,
}

impl InProcessPool {
    pub fn new(clients: Vec<ClientState>) -> Self {
        Self {
            clients,
            reverse_replies: false,
        }
    }

    /// Returns replies in reverse arrival order.
    pub fn reversed(mut self) -> Self {
        self.reverse_replies = true;
        self
    }
}

impl ClientPool for InProcessPool {
    fn client_ids(&self) -> Vec<u32> {
        self.clients.iter().map(|c| c.client_id()).collect()
    }

    fn exchange(&mut self, frames: Vec<(u32, Vec<u8>)>) -> Result<Vec<Vec<u8>>> {
        let mut replies = Vec::with_capacity(frames.len());
        for (id, frame) in frames {
            if decode_header(&frame)?.client_id != id {
                return Err(Error::Protocol(alloc::format!("frame addressed to {id} carries another id")));
            }
            let client = self
                .clients
                .iter_mut()
                .find(|c| c.client_id() == id)
                .ok_or_else(|| Error::Protocol(alloc::format!("unknown client {id}")))?;
            replies.push(client.handle(&frame)?);
        }
        if self.reverse_replies {
            replies.reverse();
        }
        Ok(replies)
    }

    fn observe(&mut self) -> Result<Vec<ClientSnapshot>> {
        Ok(self.clients.iter().map(|c| c.snapshot()).collect())
    }
}
