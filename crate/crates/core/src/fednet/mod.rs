//! Federated client/server protocol.
//!
//! Each client owns a contiguous run of blocks (and their columns of `A`).
//! A round, driven by the server:
//!
//! 1. broadcast of the previous step's pre-deltas; clients reply with their
//!    local halving count (skipped in round 0),
//! 2. the global halving count; clients apply the step and reply with their
//!    local weight normalizer,
//! 3. the global normalizer; clients reply with sketched pieces and their
//!    scaled direction.
//!
//! Data words (uploads and broadcasts) go to the ledger's data plane; the scalar
//! exchanges in steps 1–3 go to its control channel.

pub mod baseline;
pub mod client;
pub mod ledger;
pub mod messages;
pub mod server;
pub mod transport;
pub mod wire;

use alloc::vec::Vec;
use core::ops::Range;

use crate::centralpath::{HyperParams, ProblemInstance, SolveMode, SolveOptions, SolveOutput};
use crate::sketch::SketchSet;
use crate::{Error, Result};

pub use client::{ClientConfig, ClientSnapshot, ClientState};
pub use ledger::{ledger_formula, ledger_formula_for, CommLedger};
pub use server::run_federated_with;
pub use transport::{ClientPool, InProcessPool};

/// Who lifts the projected direction back through `W_i^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Completion {
    /// Clients upload `W_i^{1/2} h_i`.
    #[default]
    ClientSide,
    /// Clients upload both `h_i` and `W_i^{1/2} h_i`.
    ServerAssisted,
}

/// What each client receives per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BroadcastMode {
    /// Only the client's own slice.
    #[default]
    Slice,
    /// The full vectors; clients pick their slice.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederatedOptions {
    pub solve: SolveOptions,
    pub completion: Completion,
    pub broadcast: BroadcastMode,
}

impl FederatedOptions {
    pub fn new(solve: SolveOptions) -> Self {
        Self {
            solve,
            completion: Completion::default(),
            broadcast: BroadcastMode::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FederatedOutput {
    pub solve: SolveOutput,
    pub ledger: CommLedger,
}

/// A client's share of the problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientShare {
    pub client_id: u32,
    pub blocks: Range<usize>,
    pub columns: Range<usize>,
}

/// Groups the blocks of `problem` by owner, in client order.
pub fn client_shares(problem: &ProblemInstance) -> Vec<ClientShare> {
    let ranges = problem.block_ranges();
    let mut out: Vec<ClientShare> = Vec::new();
    for (i, (&owner, r)) in problem.owners.iter().zip(&ranges).enumerate() {
        match out.last_mut() {
            Some(last) if last.client_id == owner => {
                last.blocks.end = i + 1;
                last.columns.end = r.end;
            }
            _ => out.push(ClientShare {
                client_id: owner,
                blocks: i..i + 1,
                columns: r.clone(),
            }),
        }
    }
    out
}

/// Assigns `m` blocks to `clients` owners as evenly as contiguity allows.
pub fn even_owners(m: usize, clients: usize) -> Result<Vec<u32>> {
    if clients == 0 || clients > m {
        return Err(Error::InvalidParams("need 1 <= clients <= blocks"));
    }
    Ok((0..m).map(|i| (i * clients / m) as u32).collect())
}

pub(crate) fn sketch_config(options: &SolveOptions) -> Result<crate::centralpath::SketchConfig> {
    match options.mode {
        SolveMode::Sketched(cfg) => Ok(cfg),
        SolveMode::Exact => Err(Error::InvalidParams("federated runs need a sketched mode")),
    }
}

/// One client state per owner; the last client also holds the extra coordinate.
pub fn build_clients(problem: &ProblemInstance, options: &FederatedOptions) -> Result<Vec<ClientState>> {
    problem.validate()?;
    let cfg = sketch_config(&options.solve)?;
    let sketches = SketchSet::generate(cfg.kind, cfg.sizes, problem.d(), cfg.seed)?;
    let params: HyperParams = options.solve.params;
    let cost_scale = options.solve.delta / (problem.lipschitz * problem.diameter);
    let shares = client_shares(problem);
    let last = shares.len() - 1;
    shares
        .into_iter()
        .enumerate()
        .map(|(k, share)| {
            let cols = share.columns.clone();
            ClientState::new(ClientConfig {
                client_id: share.client_id,
                blocks: problem.blocks[share.blocks].to_vec(),
                a: problem.a.columns(cols.start, cols.len()).into_owned(),
                c: problem.c.rows(cols.start, cols.len()).into_owned(),
                cost_scale,
                params,
                specs: sketches.specs(),
                completion: options.completion,
                broadcast: options.broadcast,
                holds_extra: k == last,
                column_offset: cols.start,
            })
        })
        .collect()
}

/// Runs the protocol with in-process clients.
pub fn run_federated(problem: &ProblemInstance, options: &FederatedOptions) -> Result<FederatedOutput> {
    let mut pool = InProcessPool::new(build_clients(problem, options)?);
    run_federated_with(&mut pool, problem, options)
}
