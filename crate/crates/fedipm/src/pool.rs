//! One worker thread per client, connected by channels.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::{self, JoinHandle};

use fedipm_core::fednet::{ClientPool, ClientSnapshot, ClientState};
use fedipm_core::{Error, Result};

enum Request {
    Frame(Vec<u8>),
    Observe,
}

enum Reply {
    Frame(Result<Vec<u8>>),
    Snapshot(ClientSnapshot),
}

struct Worker {
    id: u32,
    requests: Sender<Request>,
    handle: Option<JoinHandle<()>>,
}

/// Clients running on their own threads; replies are collected in arrival order.
pub struct ThreadedPool {
    workers: Vec<Worker>,
    replies: Receiver<(u32, Reply)>,
}

impl ThreadedPool {
    pub fn spawn(clients: Vec<ClientState>) -> Self {
        let (reply_tx, replies) = channel();
        let workers = clients
            .into_iter()
            .map(|mut client| {
                let id = client.client_id();
                let (requests, inbox) = channel::<Request>();
                let tx = reply_tx.clone();
                let handle = thread::Builder::new()
                    .name(format!("client-{id}"))
                    .spawn(move || {
                        for req in inbox {
                            let reply = match req {
                                Request::Frame(frame) => Reply::Frame(client.handle(&frame)),
                                Request::Observe => Reply::Snapshot(client.snapshot()),
                            };
                            if tx.send((id, reply)).is_err() {
                                break;
                            }
                        }
                    })
                    .expect("spawn client thread");
                Worker {
                    id,
                    requests,
                    handle: Some(handle),
                }
            })
            .collect();
        Self { workers, replies }
    }

    fn send(&self, id: u32, req: Request) -> Result<()> {
        let worker = self
            .workers
            .iter()
            .find(|w| w.id == id)
            .ok_or_else(|| Error::Protocol(format!("unknown client {id}")))?;
        worker
            .requests
            .send(req)
            .map_err(|_| Error::Protocol(format!("client {id} has stopped")))
    }

    fn receive(&self) -> Result<(u32, Reply)> {
        self.replies
            .recv()
            .map_err(|_| Error::Protocol("every client has stopped".into()))
    }
}

impl ClientPool for ThreadedPool {
    fn client_ids(&self) -> Vec<u32> {
        self.workers.iter().map(|w| w.id).collect()
    }

    fn exchange(&mut self, frames: Vec<(u32, Vec<u8>)>) -> Result<Vec<Vec<u8>>> {
        let count = frames.len();
        for (id, frame) in frames {
            self.send(id, Request::Frame(frame))?;
        }
        let mut out = Vec::with_capacity(count);
        let mut failure = None;
        // Drain every reply so a failed round leaves no stale messages behind.
        for _ in 0..count {
            match self.receive()? {
                (_, Reply::Frame(Ok(frame))) => out.push(frame),
                (_, Reply::Frame(Err(e))) => failure = failure.or(Some(e)),
                (id, Reply::Snapshot(_)) => {
                    return Err(Error::Protocol(format!("unexpected snapshot from client {id}")))
                }
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    fn observe(&mut self) -> Result<Vec<ClientSnapshot>> {
        for id in self.client_ids() {
            self.send(id, Request::Observe)?;
        }
        let mut snaps = Vec::with_capacity(self.workers.len());
        for _ in 0..self.workers.len() {
            match self.receive()? {
                (_, Reply::Snapshot(s)) => snaps.push(s),
                (id, Reply::Frame(_)) => return Err(Error::Protocol(format!("unexpected frame from client {id}"))),
            }
        }
        snaps.sort_by_key(|s| s.client_id);
        Ok(snaps)
    }
}

impl Drop for ThreadedPool {
    fn drop(&mut self) {
        for w in &mut self.workers {
            let (dead, _) = channel();
            drop(std::mem::replace(&mut w.requests, dead));
        }
        for w in &mut self.workers {
            if let Some(h) = w.handle.take() {
                let _ = h.join();
            }
        }
    }
}
