//! Client side of the protocol.
//!
//! A client holds its columns `A_i`, cost slice, barriers and iterate. It only
//! ever sends sketched pieces, its scaled direction, and control scalars.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use super::messages::{ClientUpload, Message, ScalarMessage};
use super::{BroadcastMode, Completion};
use crate::barrier::{analytic_center, BlockBarrier};
use crate::centralpath::{
    block_centralities, block_ranges, damping_halvings, damping_scale, potential_phi,
    weight_log_normalizer, BlockCentrality, Centrality, HyperParams, MAX_HALVINGS,
};
use crate::newton::{complete_deltas, sketched_pieces, WeightMatrix};
use crate::sketch::{SketchSet, SketchSpec};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub client_id: u32,
    pub blocks: Vec<BlockBarrier>,
    /// `A_i`, `d x n_i`.
    pub a: DMatrix<f64>,
    /// Original cost slice `c_i`.
    pub c: DVector<f64>,
    /// `δ / (L R)`.
    pub cost_scale: f64,
    pub params: HyperParams,
    pub specs: [SketchSpec; 4],
    pub completion: Completion,
    pub broadcast: BroadcastMode,
    /// Whether this client owns the extra coordinate of the modified program.
    pub holds_extra: bool,
    /// First column of this client within the modified program.
    pub column_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Setup,
    AwaitExtra,
    AwaitDamping,
    AwaitNormalizer,
    AwaitBroadcast,
}

#[derive(Debug, Clone)]
struct PendingStep {
    dx: DVector<f64>,
    ds: DVector<f64>,
    t_next: f64,
}

/// Out-of-band view of a client for traces and final output; not protocol traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSnapshot {
    pub client_id: u32,
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub gammas: Vec<f64>,
    /// `ln Σ_j exp(λ γ_j)` over this client's blocks.
    pub log_phi: f64,
    /// `c_i^T x_i` on the original coordinates.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    cfg: ClientConfig,
    blocks: Vec<BlockBarrier>,
    ranges: Vec<Range<usize>>,
    a: DMatrix<f64>,
    x: DVector<f64>,
    s: DVector<f64>,
    t_tilde: f64,
    sketches: SketchSet,
    phase: Phase,
    round: u32,
    centrality: Vec<BlockCentrality>,
    weights: Option<WeightMatrix>,
    pending: Option<PendingStep>,
}

impl ClientState {
    pub fn new(cfg: ClientConfig) -> Result<Self> {
        let n = cfg.blocks.iter().map(|b| b.dim()).sum::<usize>();
        if cfg.a.ncols() != n || cfg.c.len() != n {
            return Err(Error::DimensionMismatch {
                context: "client columns vs blocks",
                expected: n,
                got: cfg.a.ncols(),
            });
        }
        let sketches = SketchSet::from_specs(&cfg.specs)?;
        let x = analytic_center(&cfg.blocks)?;
        let s = &cfg.c * cfg.cost_scale;
        Ok(Self {
            blocks: cfg.blocks.clone(),
            ranges: block_ranges(&cfg.blocks),
            a: cfg.a.clone(),
            x,
            s,
            t_tilde: 1.0,
            sketches,
            phase: Phase::Setup,
            round: 0,
            centrality: Vec::new(),
            weights: None,
            pending: None,
            cfg,
        })
    }

    pub fn client_id(&self) -> u32 {
        self.cfg.client_id
    }

    /// Decodes a frame, advances the state machine and encodes the reply.
    pub fn handle(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        let msg = Message::decode(frame)?;
        Ok(self.handle_message(msg)?.encode())
    }

    pub fn handle_message(&mut self, msg: Message) -> Result<Message> {
        if msg.client_id() != self.cfg.client_id {
            return Err(Error::Protocol(alloc::format!(
                "client {} received a message for client {}",
                self.cfg.client_id,
                msg.client_id()
            )));
        }
        let expected_round = match self.phase {
            Phase::AwaitBroadcast => self.round + 1,
            _ => self.round,
        };
        if msg.round() != expected_round {
            return Err(Error::Protocol(alloc::format!(
                "client {} expected round {expected_round}, got {}",
                self.cfg.client_id,
                msg.round()
            )));
        }
        match (self.phase, msg) {
            (Phase::Setup, Message::Scalar(_)) => self.on_setup(),
            (Phase::AwaitExtra, Message::Scalar(m)) => self.on_extra(m.values),
            (Phase::AwaitDamping, Message::Scalar(m)) => self.on_damping(&m.values),
            (Phase::AwaitNormalizer, Message::Scalar(m)) => self.on_normalizer(&m.values),
            (Phase::AwaitBroadcast, Message::Broadcast(b)) => {
                self.round += 1;
                self.on_broadcast(b.dx_pre, b.ds_pre, b.t_tilde)
            }
            (phase, other) => Err(Error::Protocol(alloc::format!(
                "client {} in phase {phase:?} cannot handle {:?} message",
                self.cfg.client_id,
                core::mem::discriminant(&other)
            ))),
        }
    }

    fn scalar(&self, values: Vec<f64>) -> Message {
        Message::Scalar(ScalarMessage {
            round: self.round,
            client_id: self.cfg.client_id,
            values,
        })
    }

    /// Replies with `A_i x_i^0` followed by `Σ γ_i²` at the start.
    fn on_setup(&mut self) -> Result<Message> {
        let ax = &self.a * &self.x;
        let cen = block_centralities(&self.blocks, &self.ranges, &self.x, &self.s, self.t_tilde)?;
        let sq: f64 = cen.iter().map(|b| b.gamma * b.gamma).sum();
        let mut values: Vec<f64> = ax.iter().copied().collect();
        values.push(sq);
        self.phase = Phase::AwaitExtra;
        Ok(self.scalar(values))
    }

    fn on_extra(&mut self, column: Vec<f64>) -> Result<Message> {
        if self.cfg.holds_extra {
            if column.len() != self.a.nrows() {
                return Err(Error::Protocol("extra column has the wrong length".into()));
            }
            let n = self.a.ncols();
            self.a = self.a.clone().insert_column(n, 0.0);
            self.a.set_column(n, &DVector::from_vec(column));
            self.blocks.push(BlockBarrier::log_extra());
            self.ranges = block_ranges(&self.blocks);
            self.x = self.x.clone().push(1.0);
            self.s = self.s.clone().push(1.0);
        } else if !column.is_empty() {
            return Err(Error::Protocol("unexpected extra column".into()));
        }
        self.phase = Phase::AwaitDamping;
        Ok(self.scalar(Vec::new()))
    }

    /// Applies the pending step damped by `2^-k`, re-measures centrality and
    /// replies with `ln Σ exp(2 λ γ_j)` over the local blocks.
    fn on_damping(&mut self, values: &[f64]) -> Result<Message> {
        let k = match values {
            [k] if *k >= 0.0 && *k <= MAX_HALVINGS as f64 && Float::fract(*k) == 0.0 => *k as u32,
            _ => return Err(Error::Protocol("damping message must carry one halving count".into())),
        };
        if let Some(step) = self.pending.take() {
            let scale = damping_scale(k);
            self.x += &step.dx * scale;
            self.s += &step.ds * scale;
            self.t_tilde = step.t_next;
        }
        self.centrality = block_centralities(&self.blocks, &self.ranges, &self.x, &self.s, self.t_tilde)?;
        let gammas: Vec<f64> = self.centrality.iter().map(|b| b.gamma).collect();
        let local = weight_log_normalizer(&gammas, self.cfg.params.lambda);
        self.phase = Phase::AwaitNormalizer;
        Ok(self.scalar(alloc::vec![local]))
    }

    fn on_normalizer(&mut self, values: &[f64]) -> Result<Message> {
        let [lse] = values else {
            return Err(Error::Protocol("normalizer message must carry one value".into()));
        };
        let cen = Centrality::with_normalizer(self.centrality.clone(), *lse, &self.cfg.params);
        let h = cen.direction_h(self.cfg.params.alpha);
        let w = cen.weight_matrix()?;
        let h_scaled = w.apply_sqrt(&h);
        let pieces = sketched_pieces(&self.a, &w, &self.sketches)?;
        let (h, h_scaled) = match self.cfg.completion {
            Completion::ClientSide => (h_scaled, None),
            Completion::ServerAssisted => (h, Some(h_scaled)),
        };
        self.weights = Some(w);
        self.phase = Phase::AwaitBroadcast;
        Ok(Message::Upload(ClientUpload {
            round: self.round,
            client_id: self.cfg.client_id,
            u: pieces.u,
            m: pieces.m,
            v: pieces.v,
            h,
            h_scaled,
        }))
    }

    /// Completes `δx = W_i^{1/2} p`, `δs = W_i^{-1/2} q` and replies with the
    /// local halving count.
    fn on_broadcast(&mut self, p: DVector<f64>, q: DVector<f64>, t_next: f64) -> Result<Message> {
        let ni = self.x.len();
        let (p, q) = match self.cfg.broadcast {
            BroadcastMode::Slice => (p, q),
            BroadcastMode::Full => {
                let off = self.cfg.column_offset;
                if p.len() < off + ni || q.len() < off + ni {
                    return Err(Error::Protocol("full broadcast too short".into()));
                }
                (p.rows(off, ni).into_owned(), q.rows(off, ni).into_owned())
            }
        };
        if p.len() != ni || q.len() != ni {
            return Err(Error::Protocol("broadcast slice has the wrong length".into()));
        }
        if !(t_next > 0.0 && t_next <= self.t_tilde) {
            return Err(Error::Protocol("path parameter must shrink".into()));
        }
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::Protocol("broadcast before upload".into()))?;
        let (dx, ds) = complete_deltas(w, &p, &q);
        let k = damping_halvings(&self.blocks, &self.ranges, &self.x, &dx)?;
        self.pending = Some(PendingStep { dx, ds, t_next });
        self.phase = Phase::AwaitDamping;
        Ok(self.scalar(alloc::vec![k as f64]))
    }

    pub fn snapshot(&self) -> ClientSnapshot {
        let gammas: Vec<f64> = self.centrality.iter().map(|b| b.gamma).collect();
        let n_orig = self.cfg.c.len();
        ClientSnapshot {
            client_id: self.cfg.client_id,
            x: self.x.clone(),
            s: self.s.clone(),
            log_phi: potential_phi(&gammas, self.cfg.params.lambda).1,
            gammas,
            objective: self.cfg.c.dot(&self.x.rows(0, n_orig)),
        }
    }
}
