//! Server side of the protocol.

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::DVector;
use num_traits::Float;

use super::client::ClientSnapshot;
use super::ledger::CommLedger;
use super::messages::{ClientUpload, Message, ScalarMessage, ServerBroadcast};
use super::transport::ClientPool;
use super::wire::data_words;
use super::{client_shares, sketch_config, BroadcastMode, FederatedOptions, FederatedOutput};
use crate::centralpath::{duality_gap_bound, ProblemInstance, Schedule, SolveOutput, TraceRow};
use crate::linalg::log_sum_exp;
use crate::newton::{assemble_sketched_projection, pre_deltas, ProjectionBundle, SketchedPieces};
use crate::sketch::SketchSet;
use crate::{Error, Result};

struct Server<'p, P: ClientPool + ?Sized> {
    pool: &'p mut P,
    ids: Vec<u32>,
    ledger: CommLedger,
}

impl<P: ClientPool + ?Sized> Server<'_, P> {
    /// Sends one message per client and returns the decoded replies in client order.
    fn exchange(&mut self, msgs: Vec<Message>) -> Result<Vec<(Message, u64)>> {
        let frames = msgs.iter().map(|m| (m.client_id(), m.encode())).collect();
        let replies = self.pool.exchange(frames)?;
        let mut slots: Vec<Option<(Message, u64)>> = alloc::vec![None; self.ids.len()];
        for bytes in replies {
            let words = data_words(&bytes)?;
            let msg = Message::decode(&bytes)?;
            let idx = self
                .ids
                .iter()
                .position(|&id| id == msg.client_id())
                .ok_or_else(|| Error::Protocol(alloc::format!("reply from unknown client {}", msg.client_id())))?;
            if slots[idx].is_some() {
                return Err(Error::Protocol(alloc::format!("duplicate reply from client {}", msg.client_id())));
            }
            slots[idx] = Some((msg, words));
        }
        slots
            .into_iter()
            .zip(&self.ids)
            .map(|(s, &id)| {
                s.ok_or(Error::MissingUpload {
                    client: id,
                    round: msgs.first().map_or(0, |m| m.round()),
                })
            })
            .collect()
    }

    /// Sends per-client scalars and returns each reply's values.
    fn scalars(&mut self, round: u32, values: Vec<Vec<f64>>) -> Result<(Vec<Vec<f64>>, u64, u64)> {
        let down: u64 = values.iter().map(|v| v.len() as u64).sum();
        let msgs = self
            .ids
            .iter()
            .zip(values)
            .map(|(&client_id, values)| {
                Message::Scalar(ScalarMessage {
                    round,
                    client_id,
                    values,
                })
            })
            .collect();
        let mut out = Vec::with_capacity(self.ids.len());
        let mut up = 0;
        for (msg, _) in self.exchange(msgs)? {
            match msg {
                Message::Scalar(s) if s.round == round => {
                    up += s.values.len() as u64;
                    out.push(s.values);
                }
                other => {
                    return Err(Error::Protocol(alloc::format!(
                        "expected a round {round} scalar reply from client {}",
                        other.client_id()
                    )))
                }
            }
        }
        Ok((out, up, down))
    }

    fn broadcast_scalar(&mut self, round: u32, value: f64) -> Result<Vec<f64>> {
        let (replies, up, down) = self.scalars(round, alloc::vec![alloc::vec![value]; self.ids.len()])?;
        self.ledger.record_control(round as usize, up, down);
        replies
            .into_iter()
            .map(|v| match v.as_slice() {
                [x] => Ok(*x),
                _ => Err(Error::Protocol("expected exactly one scalar".into())),
            })
            .collect()
    }

    fn observe(&mut self) -> Result<Vec<ClientSnapshot>> {
        let mut snaps = self.pool.observe()?;
        snaps.sort_by_key(|s| s.client_id);
        if snaps.iter().map(|s| s.client_id).ne(self.ids.iter().copied()) {
            return Err(Error::Protocol("snapshot set differs from the client set".into()));
        }
        Ok(snaps)
    }
}

/// Runs the protocol against `pool`. The server side only reads `b`, the block
/// layout and `ν` from `problem`; `c` and `A` are used to report the final
/// objective and residual.
pub fn run_federated_with<P: ClientPool + ?Sized>(
    pool: &mut P,
    problem: &ProblemInstance,
    options: &FederatedOptions,
) -> Result<FederatedOutput> {
    problem.validate()?;
    let solve = &options.solve;
    let cfg = sketch_config(solve)?;
    let d = problem.d();
    let shares = client_shares(problem);
    let mut ids: Vec<u32> = shares.iter().map(|s| s.client_id).collect();
    ids.sort_unstable();
    let mut pool_ids = pool.client_ids();
    pool_ids.sort_unstable();
    if pool_ids != ids {
        return Err(Error::Protocol("pool clients differ from the problem's owners".into()));
    }
    // Slice lengths in the modified program; the last client holds the extra coordinate.
    let mut dims: Vec<usize> = shares.iter().map(|s| s.columns.len()).collect();
    *dims.last_mut().expect("at least one client") += 1;
    let n_total: usize = dims.iter().sum();
    let mut server = Server {
        pool,
        ledger: CommLedger::new(&ids),
        ids,
    };
    let k_clients = server.ids.len();

    // Setup: gather A_i x_i^0 and the squared dual norms, then hand out the extra column.
    let (replies, up, _) = server.scalars(0, alloc::vec![Vec::new(); k_clients])?;
    server.ledger.setup_uplink += up;
    let mut ax = DVector::zeros(d);
    let mut sq = 0.0;
    for v in &replies {
        if v.len() != d + 1 {
            return Err(Error::Protocol("setup reply has the wrong length".into()));
        }
        ax += DVector::from_column_slice(&v[..d]);
        sq += v[d];
    }
    let measured = Float::sqrt(sq);
    if measured > solve.delta {
        return Err(Error::CenteringTooLoose {
            measured,
            allowed: solve.delta,
        });
    }
    let extra: Vec<f64> = (&problem.b - ax).iter().copied().collect();
    let mut payloads = alloc::vec![Vec::new(); k_clients];
    payloads[k_clients - 1] = extra;
    server.ledger.setup_downlink += d as u64;
    let (acks, _, _) = server.scalars(0, payloads)?;
    if acks.iter().any(|a| !a.is_empty()) {
        return Err(Error::Protocol("setup acknowledgement must be empty".into()));
    }

    let nu = problem.nu() + 1.0;
    let schedule = Schedule::new(solve.params.xi, nu)?;
    let target = solve.termination.target_t(solve.delta, nu);
    let sketches = SketchSet::generate(cfg.kind, cfg.sizes, d, cfg.seed)?;
    let specs = sketches.specs();

    let mut trace = Vec::new();
    let mut pending: Option<Vec<ServerBroadcast>> = None;
    let mut r: u64 = 0;
    loop {
        let round = u32::try_from(r).map_err(|_| Error::Protocol("round counter overflow".into()))?;
        let mut halvings = 0.0f64;
        if let Some(broadcasts) = pending.take() {
            let msgs: Vec<Message> = broadcasts.into_iter().map(Message::Broadcast).collect();
            for m in &msgs {
                let words = data_words(&m.encode())?;
                server.ledger.record_downlink(r as usize - 1, m.client_id(), words);
            }
            let mut up = 0;
            for (reply, _) in server.exchange(msgs)? {
                match reply {
                    Message::Scalar(s) if s.round == round && s.values.len() == 1 => {
                        up += 1;
                        halvings = halvings.max(s.values[0]);
                    }
                    other => {
                        return Err(Error::Protocol(alloc::format!(
                            "expected a halving count from client {}",
                            other.client_id()
                        )))
                    }
                }
            }
            server.ledger.record_control(r as usize, up, 0);
        }

        let local_lse = server.broadcast_scalar(round, halvings)?;
        let snaps = server.observe()?;
        let t_tilde = schedule.t_at(r);
        trace.push(trace_row(r, t_tilde, nu, &snaps, &server.ledger));
        if t_tilde <= target {
            break;
        }
        if r >= solve.max_iters {
            let out = finish(problem, &snaps, t_tilde, r, trace);
            return Err(Error::IterationCapExceeded(Box::new(out)));
        }

        let lse = log_sum_exp(local_lse.iter().copied());
        let msgs = server
            .ids
            .iter()
            .map(|&client_id| {
                Message::Scalar(ScalarMessage {
                    round,
                    client_id,
                    values: alloc::vec![lse],
                })
            })
            .collect();
        server.ledger.record_control(r as usize, 0, k_clients as u64);
        let mut uploads: Vec<ClientUpload> = Vec::with_capacity(k_clients);
        for (reply, words) in server.exchange(msgs)? {
            match reply {
                Message::Upload(up) if up.round == round => {
                    server.ledger.record_uplink(r as usize, up.client_id, words);
                    uploads.push(up);
                }
                other => {
                    return Err(Error::MissingUpload {
                        client: other.client_id(),
                        round,
                    })
                }
            }
        }
        for (up, &ni) in uploads.iter().zip(&dims) {
            if up.h.len() != ni {
                return Err(Error::Protocol(alloc::format!("upload from client {} has the wrong width", up.client_id)));
            }
        }
        let pieces: Vec<SketchedPieces> = uploads
            .iter()
            .map(|u| SketchedPieces {
                u: u.u.clone(),
                m: u.m.clone(),
                v: u.v.clone(),
            })
            .collect();
        let bundle = ProjectionBundle::from_pieces(&pieces, specs)?;
        let proj = assemble_sketched_projection(&bundle, &sketches)?;
        let mut h_scaled = DVector::zeros(n_total);
        let mut offset = 0;
        for up in &uploads {
            let part = match &up.h_scaled {
                Some(hs) => hs,
                None => &up.h,
            };
            h_scaled.rows_mut(offset, part.len()).copy_from(part);
            offset += part.len();
        }
        let (p, q) = pre_deltas(&proj, &h_scaled, t_tilde);
        let t_next = schedule.t_at(r + 1);
        let mut offset = 0;
        let mut out = Vec::with_capacity(k_clients);
        for (&client_id, &ni) in server.ids.iter().zip(&dims) {
            let (dx_pre, ds_pre) = match options.broadcast {
                BroadcastMode::Slice => (p.rows(offset, ni).into_owned(), q.rows(offset, ni).into_owned()),
                BroadcastMode::Full => (p.clone(), q.clone()),
            };
            out.push(ServerBroadcast {
                round: round + 1,
                client_id,
                dx_pre,
                ds_pre,
                t_tilde: t_next,
            });
            offset += ni;
        }
        pending = Some(out);
        r += 1;
    }

    let snaps = server.observe()?;
    let t_tilde = schedule.t_at(r);
    Ok(FederatedOutput {
        solve: finish(problem, &snaps, t_tilde, r, trace),
        ledger: server.ledger,
    })
}

fn trace_row(
    r: u64,
    t_tilde: f64,
    nu: f64,
    snaps: &[ClientSnapshot],
    ledger: &CommLedger,
) -> TraceRow {
    let words = match r {
        0 => Default::default(),
        _ => ledger.rounds()[r as usize - 1],
    };
    let gamma_max = snaps
        .iter()
        .flat_map(|s| s.gammas.iter().copied())
        .fold(0.0, f64::max);
    let log_phi = log_sum_exp(snaps.iter().map(|s| s.log_phi));
    TraceRow {
        iter: r,
        t_tilde,
        gamma_max,
        phi: Float::exp(log_phi),
        gap_bound: duality_gap_bound(t_tilde, nu),
        uplink_words: words.uplink,
        downlink_words: words.downlink,
        objective: snaps.iter().map(|s| s.objective).sum(),
    }
}

fn finish(
    problem: &ProblemInstance,
    snaps: &[ClientSnapshot],
    t_tilde: f64,
    iterations: u64,
    trace: Vec<TraceRow>,
) -> SolveOutput {
    let x_bar = DVector::from_iterator(
        snaps.iter().map(|s| s.x.len()).sum(),
        snaps.iter().flat_map(|s| s.x.iter().copied()),
    );
    let s_bar = DVector::from_iterator(
        snaps.iter().map(|s| s.s.len()).sum(),
        snaps.iter().flat_map(|s| s.s.iter().copied()),
    );
    let x = x_bar.rows(0, problem.n()).into_owned();
    SolveOutput {
        objective: problem.objective(&x),
        residual_l1: problem.residual_l1(&x),
        x,
        x_bar,
        s_bar,
        t_tilde,
        iterations,
        trace,
    }
}
