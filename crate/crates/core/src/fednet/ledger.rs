//! Exact communication accounting in 64-bit words.
//!
//! Data-plane words are the f64 values in upload and broadcast frames. The
//! scalar exchanges that coordinate damping and weight normalization are
//! counted on a separate control channel, as is the one-off setup.

use alloc::vec::Vec;

use super::{BroadcastMode, Completion};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundWords {
    pub uplink: u64,
    pub downlink: u64,
    pub control_uplink: u64,
    pub control_downlink: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientWords {
    pub client_id: u32,
    pub uplink: u64,
    pub downlink: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    rounds: Vec<RoundWords>,
    clients: Vec<ClientWords>,
    pub setup_uplink: u64,
    pub setup_downlink: u64,
}

impl CommLedger {
    pub fn new(client_ids: &[u32]) -> Self {
        Self {
            rounds: Vec::new(),
            clients: client_ids
                .iter()
                .map(|&client_id| ClientWords {
                    client_id,
                    ..Default::default()
                })
                .collect(),
            setup_uplink: 0,
            setup_downlink: 0,
        }
    }

    fn round_mut(&mut self, round: usize) -> &mut RoundWords {
        if self.rounds.len() <= round {
            self.rounds.resize(round + 1, RoundWords::default());
        }
        &mut self.rounds[round]
    }

    fn client_mut(&mut self, client_id: u32) -> &mut ClientWords {
        let idx = self
            .clients
            .iter()
            .position(|c| c.client_id == client_id)
            .expect("ledger knows every client");
        &mut self.clients[idx]
    }

    pub fn record_uplink(&mut self, round: usize, client_id: u32, words: u64) {
        self.round_mut(round).uplink += words;
        self.client_mut(client_id).uplink += words;
    }

    pub fn record_downlink(&mut self, round: usize, client_id: u32, words: u64) {
        self.round_mut(round).downlink += words;
        self.client_mut(client_id).downlink += words;
    }

    pub fn record_control(&mut self, round: usize, uplink: u64, downlink: u64) {
        let r = self.round_mut(round);
        r.control_uplink += uplink;
        r.control_downlink += downlink;
    }

    pub fn rounds(&self) -> &[RoundWords] {
        &self.rounds
    }

    pub fn per_client(&self) -> &[ClientWords] {
        &self.clients
    }

    pub fn total_uplink(&self) -> u64 {
        self.rounds.iter().map(|r| r.uplink).sum()
    }

    pub fn total_downlink(&self) -> u64 {
        self.rounds.iter().map(|r| r.downlink).sum()
    }

    pub fn total_control(&self) -> (u64, u64) {
        self.rounds.iter().fold((0, 0), |(u, d), r| {
            (u + r.control_uplink, d + r.control_downlink)
        })
    }
}

/// `(Σ_i (n_i b1 + b2 b3 + b4 n_i + n_i),  Σ_i (2 n_i + 1))` per round.
pub fn ledger_formula(client_dims: &[usize], sizes: [usize; 4]) -> (u64, u64) {
    ledger_formula_for(client_dims, sizes, Completion::ClientSide, BroadcastMode::Slice)
}

/// Per-round words for a given completion variant and broadcast granularity.
pub fn ledger_formula_for(
    client_dims: &[usize],
    sizes: [usize; 4],
    completion: Completion,
    broadcast: BroadcastMode,
) -> (u64, u64) {
    let [b1, b2, b3, b4] = sizes.map(|b| b as u64);
    let n_total: u64 = client_dims.iter().map(|&n| n as u64).sum();
    let mut up = 0;
    let mut down = 0;
    for &ni in client_dims {
        let ni = ni as u64;
        up += ni * b1 + b2 * b3 + b4 * ni + ni;
        if completion == Completion::ServerAssisted {
            up += ni;
        }
        down += match broadcast {
            BroadcastMode::Slice => 2 * ni + 1,
            BroadcastMode::Full => 2 * n_total + 1,
        };
    }
    (up, down)
}
