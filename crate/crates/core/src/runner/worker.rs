//! One PE of the asynchronous and event-triggered solvers.
//!
//! The same step function drives both backends through [`PeNet`].

use crate::comm::{ChannelId, CommError, Delivery, HaloKind, HaloMessage, Step};
use crate::convergence::{
    nullify_on_new_values, ConvEvent, ConvEventKind, ConvReport, FreshArrival, LocalConvState, MasterState,
    RestartRule,
};
use crate::event::{GhostHistory, ThresholdState, ThresholdTraceRow};
use crate::grid::{l1_norm, BoundaryCondition, Side, Subdomain};

use super::{PolicyKind, RunError};

/// Halo channel layout for a 1-D row decomposition.
///
/// Channel `2 * pe + side.index()` carries PE `pe`'s `side` edge to the
/// neighbor on that side, where it lands in the opposite ghost row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Topology {
    pub n_pes: usize,
    pub periodic: bool,
}

impl Topology {
    pub fn new(n_pes: usize, bc: BoundaryCondition) -> Self {
        Topology {
            n_pes,
            periodic: bc == BoundaryCondition::Periodic,
        }
    }

    pub fn n_channels(&self) -> usize {
        2 * self.n_pes
    }

    pub fn neighbor(&self, pe: usize, side: Side) -> Option<usize> {
        let n = self.n_pes;
        if n == 1 {
            return None;
        }
        match side {
            Side::Bottom if pe == 0 => self.periodic.then_some(n - 1),
            Side::Bottom => Some(pe - 1),
            Side::Top if pe == n - 1 => self.periodic.then_some(0),
            Side::Top => Some(pe + 1),
        }
    }

    /// Channel carrying `pe`'s `side` edge, if that side has a neighbor.
    pub fn outgoing(&self, pe: usize, side: Side) -> Option<ChannelId> {
        self.neighbor(pe, side).map(|_| ChannelId(2 * pe + side.index()))
    }

    /// Channel that fills `pe`'s `ghost` row.
    pub fn incoming(&self, pe: usize, ghost: Side) -> Option<ChannelId> {
        self.neighbor(pe, ghost)
            .map(|nb| ChannelId(2 * nb + ghost.opposite().index()))
    }

    pub fn is_registered(&self, ch: ChannelId) -> bool {
        let side = if ch.0.is_multiple_of(2) { Side::Bottom } else { Side::Top };
        ch.0 < self.n_channels() && self.outgoing(ch.0 / 2, side).is_some()
    }
}

/// Communication endpoints seen by one PE.
pub trait PeNet {
    fn put_halo(&mut self, ch: ChannelId, msg: HaloMessage) -> Result<u64, CommError>;
    fn read_halo(&mut self, ch: ChannelId) -> Result<Delivery<HaloMessage>, CommError>;
    fn put_report(&mut self, report: ConvReport) -> Result<(), CommError>;
    fn read_report(&mut self, pe: usize) -> Result<Delivery<Option<ConvReport>>, CommError>;
    fn put_global(&mut self, pe: usize) -> Result<(), CommError>;
    fn read_global(&mut self, pe: usize) -> Result<bool, CommError>;
    /// Virtual time, when there is one.
    fn now(&self) -> Option<u64>;
}

#[derive(Clone, Debug)]
struct Outgoing {
    ch: ChannelId,
    side: Side,
    threshold: Option<ThresholdState>,
    last_sent: Option<Vec<f64>>,
    seq: u64,
    halo: u64,
}

#[derive(Clone, Debug)]
struct Incoming {
    ch: ChannelId,
    ghost: Side,
    history: GhostHistory,
    consumed: u64,
}

/// Per-channel halo count as reported by a worker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentCount {
    pub ch: ChannelId,
    pub side: Side,
    pub count: u64,
}

#[derive(Clone, Debug)]
pub struct PeWorker {
    pub pe: usize,
    pub sub: Subdomain,
    omega: f64,
    event: bool,
    restart: RestartRule,
    scale: f64,
    pub iter: u64,
    conv: LocalConvState,
    outs: Vec<Outgoing>,
    ins: Vec<Incoming>,
    master: Option<MasterState>,
    n_pes: usize,
    pub control_sent: u64,
    pub finished: bool,
    reported: (bool, Vec<(usize, u64)>),
    tracing: bool,
    pub conv_events: Vec<ConvEvent>,
    pub trace_rows: Vec<ThresholdTraceRow>,
}

#[derive(Clone, Debug)]
pub struct WorkerSetup {
    pub omega: f64,
    pub policy: PolicyKind,
    pub restart: RestartRule,
    pub tol: f64,
    pub window: u32,
    /// Divides local max residuals into relative ones.
    pub scale: f64,
    pub tracing: bool,
}

impl PeWorker {
    pub fn new(pe: usize, sub: Subdomain, topo: &Topology, setup: &WorkerSetup) -> Result<Self, RunError> {
        let params = setup.policy.event_params().copied();
        let mut outs = Vec::new();
        let mut ins = Vec::new();
        for side in Side::BOTH {
            if let Some(ch) = topo.outgoing(pe, side) {
                outs.push(Outgoing {
                    ch,
                    side,
                    threshold: params.map(ThresholdState::new).transpose()?,
                    last_sent: None,
                    seq: 0,
                    halo: 0,
                });
            }
            if let Some(ch) = topo.incoming(pe, side) {
                ins.push(Incoming {
                    ch,
                    ghost: side,
                    history: GhostHistory::new(),
                    consumed: 0,
                });
            }
        }
        Ok(PeWorker {
            pe,
            sub,
            omega: setup.omega,
            event: params.is_some(),
            restart: setup.restart,
            scale: setup.scale,
            iter: 0,
            conv: LocalConvState::new(setup.tol, setup.window)?,
            outs,
            ins,
            master: (pe == 0).then(|| MasterState::new(topo.n_pes)),
            n_pes: topo.n_pes,
            control_sent: 0,
            finished: false,
            reported: (false, Vec::new()),
            tracing: setup.tracing,
            conv_events: Vec::new(),
            trace_rows: Vec::new(),
        })
    }

    pub fn busy(&self) -> bool {
        !self.finished && !self.conv.converged()
    }

    pub fn halo_counts(&self) -> Vec<SentCount> {
        self.outs
            .iter()
            .map(|o| SentCount {
                ch: o.ch,
                side: o.side,
                count: o.halo,
            })
            .collect()
    }

    pub fn diagnostic(&self) -> String {
        let mut s = format!(
            "pe {}: iter {}, converged {}, streak {}, rel residual {:.3e}",
            self.pe,
            self.iter,
            self.conv.converged(),
            self.conv.streak(),
            self.sub.local_residual() / self.scale,
        );
        for o in &self.outs {
            s += &format!(", out ch {} seq {}", o.ch.0, o.seq);
        }
        for i in &self.ins {
            s += &format!(", in ch {} consumed {}", i.ch.0, i.consumed);
        }
        if let Some(m) = &self.master {
            s += &format!(", master flags {:?}", m.flags());
        }
        s
    }

    fn log<N: PeNet>(&mut self, event: ConvEventKind, net: &N) {
        self.conv_events.push(ConvEvent {
            pe: self.pe,
            iter: self.iter,
            event,
            t: net.now(),
        });
    }

    pub fn step<N: PeNet>(&mut self, net: &mut N) -> Result<Step, RunError> {
        if self.finished {
            return Ok(Step::Finished);
        }
        if net.read_global(self.pe)? {
            self.finished = true;
            return Ok(Step::Finished);
        }
        if self.conv.converged() {
            self.poll(net)?;
        } else {
            self.sweep(net)?;
        }
        self.report(net)?;
        self.master_poll(net)?;
        Ok(Step::Running)
    }

    fn put<N: PeNet>(
        &mut self,
        net: &mut N,
        k: usize,
        values: Vec<f64>,
        converged: bool,
        kind: HaloKind,
    ) -> Result<(), RunError> {
        let out = &mut self.outs[k];
        let msg = HaloMessage {
            values: crate::grid::BoundaryVector {
                side: out.side,
                values,
            },
            sender_iter: self.iter,
            sender_converged: converged,
            kind,
        };
        if kind == HaloKind::Boundary {
            out.last_sent = Some(msg.values.values.clone());
            out.halo += 1;
        } else {
            self.control_sent += 1;
        }
        out.seq = net.put_halo(out.ch, msg)?;
        Ok(())
    }

    fn sweep<N: PeNet>(&mut self, net: &mut N) -> Result<(), RunError> {
        let edges = self.sub.sor_sweep(self.omega);
        self.iter += 1;
        let iter = self.iter;
        for k in 0..self.outs.len() {
            let edge = &edges[self.outs[k].side.index()];
            let send = match &mut self.outs[k].threshold {
                None => true,
                Some(ts) => {
                    let norm = edge.l1_norm();
                    let tau = ts.threshold();
                    let send = ts.should_send(norm, iter);
                    if send {
                        ts.on_send(norm, iter);
                    }
                    if self.tracing {
                        self.trace_rows.push(ThresholdTraceRow {
                            pe: self.pe,
                            side: edge.side,
                            iter,
                            norm,
                            tau,
                            sent: send,
                        });
                    }
                    send
                }
            };
            if send {
                self.put(net, k, edge.values.clone(), false, HaloKind::Boundary)?;
            }
        }

        self.read_incoming(net, self.event)?;
        let rel = self.sub.local_residual() / self.scale;
        if !rel.is_finite() {
            return Err(RunError::Diverged { iter: self.iter });
        }
        if self.conv.update_local(rel) {
            self.log(ConvEventKind::Converged, net);
            if self.event {
                self.flush(net, true)?;
            }
        }
        Ok(())
    }

    /// Event policy: tells neighbors about a convergence change. On
    /// convergence the current edge goes out so that neighbors hold exact
    /// ghosts, as a flag-only message if they already have it.
    fn flush<N: PeNet>(&mut self, net: &mut N, converged: bool) -> Result<(), RunError> {
        for k in 0..self.outs.len() {
            let edge = self.sub.boundary(self.outs[k].side).values;
            let stale = self.outs[k].last_sent.as_deref() != Some(edge.as_slice());
            if converged && stale {
                let norm = l1_norm(&edge);
                if let Some(ts) = &mut self.outs[k].threshold {
                    ts.on_send(norm, self.iter);
                }
                self.put(net, k, edge, true, HaloKind::Boundary)?;
            } else {
                self.put(net, k, edge, converged, HaloKind::FlagOnly)?;
            }
        }
        Ok(())
    }

    /// Reads every incoming channel. Fresh messages are installed as ghosts;
    /// otherwise, under the event policy, ghosts of still-iterating
    /// neighbors are extrapolated. Returns the fresh arrivals that carry
    /// boundary values or change a ghost.
    fn read_incoming<N: PeNet>(&mut self, net: &mut N, extrapolate: bool) -> Result<Vec<FreshArrival>, RunError> {
        let mut arrivals = Vec::new();
        for inc in &mut self.ins {
            let d = net.read_halo(inc.ch)?;
            inc.consumed = d.seq;
            if d.fresh {
                let msg = d.message;
                let values = msg.values.values;
                let ghost = self.sub.ghost(inc.ghost);
                let ghost_norm = l1_norm(ghost);
                // A flag-only message still matters if it replaces an
                // extrapolated ghost.
                let changed = msg.kind == HaloKind::Boundary || ghost != values.as_slice();
                if inc.history.latest() != Some(values.as_slice()) {
                    inc.history.record(self.iter, &values);
                }
                inc.history.neighbor_converged = msg.sender_converged;
                self.sub.set_ghost(inc.ghost, &values);
                if changed {
                    arrivals.push(FreshArrival {
                        fresh_norm: l1_norm(&values),
                        ghost_norm,
                    });
                }
            } else if extrapolate && !inc.history.neighbor_converged && !inc.history.is_empty() {
                if let Ok(g) = inc.history.extrapolate(self.iter) {
                    self.sub.set_ghost(inc.ghost, &g);
                }
            }
        }
        Ok(arrivals)
    }

    /// Locally converged: watch for new neighbor values and restart if they
    /// matter.
    fn poll<N: PeNet>(&mut self, net: &mut N) -> Result<(), RunError> {
        let arrivals = self.read_incoming(net, false)?;
        let restart = match self.restart {
            RestartRule::NormChange { threshold } => nullify_on_new_values(&mut self.conv, &arrivals, threshold),
            RestartRule::ResidualRecheck => {
                let stale = !arrivals.is_empty() && self.sub.local_residual() / self.scale >= self.conv.tol();
                if stale {
                    self.conv.nullify();
                }
                stale
            }
        };
        if restart {
            self.log(ConvEventKind::Nullified, net);
            if self.event {
                self.flush(net, false)?;
            }
        }
        Ok(())
    }

    /// Sends a report to the master when the local flag changes, or when new
    /// halo messages were consumed while converged.
    fn report<N: PeNet>(&mut self, net: &mut N) -> Result<(), RunError> {
        let converged = self.conv.converged();
        let consumed: Vec<(usize, u64)> = self.ins.iter().map(|i| (i.ch.0, i.consumed)).collect();
        let due = converged != self.reported.0 || (converged && consumed != self.reported.1);
        if !due {
            return Ok(());
        }
        let report = ConvReport {
            pe: self.pe,
            iter: self.iter,
            converged,
            sent: self.outs.iter().map(|o| (o.ch.0, o.seq)).collect(),
            consumed: consumed.clone(),
        };
        self.reported = (converged, consumed);
        match &mut self.master {
            Some(m) => {
                if m.master_step(report)? {
                    self.broadcast(net)?;
                }
            }
            None => {
                net.put_report(report)?;
                self.control_sent += 1;
            }
        }
        Ok(())
    }

    fn master_poll<N: PeNet>(&mut self, net: &mut N) -> Result<(), RunError> {
        let Some(m) = &mut self.master else {
            return Ok(());
        };
        if m.global_converged() {
            return Ok(());
        }
        let mut fire = false;
        for pe in 1..self.n_pes {
            let d = net.read_report(pe)?;
            if let (true, Some(r)) = (d.fresh, d.message) {
                fire |= m.master_step(r)?;
            }
        }
        if fire {
            self.broadcast(net)?;
        }
        Ok(())
    }

    fn broadcast<N: PeNet>(&mut self, net: &mut N) -> Result<(), RunError> {
        self.log(ConvEventKind::Global, net);
        for pe in 0..self.n_pes {
            net.put_global(pe)?;
        }
        self.control_sent += self.n_pes as u64;
        Ok(())
    }
}
