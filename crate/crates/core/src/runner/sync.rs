//! Bulk-synchronous solver: every iteration all PEs sweep, exchange halos,
//! and agree on the global residual before continuing.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use crate::comm::{ChannelId, CommEvent, HaloKind, HaloMessage, VirtualWindow};
use crate::grid::{max_nan, Side, Subdomain};

use super::worker::Topology;
use super::{RunConfig, RunError};

pub struct SyncOutcome {
    pub subs: Vec<Subdomain>,
    pub iterations: u64,
    /// Halo puts per channel id.
    pub halo: Vec<u64>,
    pub control: u64,
    pub virtual_time: Option<u64>,
    pub wall_time_ms: Option<f64>,
    pub timed_out: bool,
    pub last_relative: f64,
    pub comm_log: Vec<CommEvent>,
}

fn message(side: Side, values: Vec<f64>, iter: u64) -> HaloMessage {
    HaloMessage {
        values: crate::grid::BoundaryVector { side, values },
        sender_iter: iter,
        sender_converged: false,
        kind: HaloKind::Boundary,
    }
}

/// Iteration `k` costs the slowest PE's compute draw, then the slowest
/// message latency, then one latency draw for the reduction.
pub fn run_virtual(
    mut subs: Vec<Subdomain>,
    topo: &Topology,
    config: &RunConfig,
    scale: f64,
    log: bool,
) -> Result<SyncOutcome, RunError> {
    let n = topo.n_pes;
    let ny = subs[0].ny;
    let mut delays = config.delays.sampler(config.seed);
    let mut window = VirtualWindow::new("halo", topo.n_channels(), message(Side::Bottom, vec![0.0; ny], 0));
    for c in 0..topo.n_channels() {
        if topo.is_registered(ChannelId(c)) {
            window.register(ChannelId(c));
        }
    }
    if log {
        window = window.with_log();
    }
    let mut halo = vec![0u64; topo.n_channels()];
    let (mut t, mut iter, mut control) = (0u64, 0u64, 0u64);
    let mut rel = f64::INFINITY;
    let mut timed_out = false;
    loop {
        if iter.saturating_mul(n as u64) >= config.step_limit {
            timed_out = true;
            break;
        }
        t += (0..n).map(|pe| delays.compute(pe)).max().unwrap_or(0);
        iter += 1;
        let mut visible = t;
        for (pe, sub) in subs.iter_mut().enumerate() {
            let edges = sub.sor_sweep(config.omega);
            for side in Side::BOTH {
                if let Some(ch) = topo.outgoing(pe, side) {
                    let lat = delays.latency();
                    let values = edges[side.index()].values.clone();
                    window.put(ch, message(side, values, iter), t, lat)?;
                    halo[ch.0] += 1;
                    visible = visible.max(t + lat);
                }
            }
        }
        t = visible;
        for (pe, sub) in subs.iter_mut().enumerate() {
            for ghost in Side::BOTH {
                if let Some(ch) = topo.incoming(pe, ghost) {
                    let d = window.read_fresh(ch, t)?;
                    sub.set_ghost(ghost, &d.message.values.values);
                }
            }
        }
        rel = subs.iter().map(|s| s.local_residual()).fold(0.0, max_nan) / scale;
        t += delays.latency();
        control += n as u64;
        if !rel.is_finite() {
            return Err(RunError::Diverged { iter });
        }
        if rel < config.tol {
            break;
        }
    }
    Ok(SyncOutcome {
        subs,
        iterations: iter,
        halo,
        control,
        virtual_time: Some(t),
        wall_time_ms: None,
        timed_out,
        last_relative: rel,
        comm_log: window.take_log(),
    })
}

/// One thread per PE; halo puts go through a shared window, the reduction is
/// a barrier plus a fold over per-PE slots.
pub fn run_threads(
    subs: Vec<Subdomain>,
    topo: &Topology,
    config: &RunConfig,
    scale: f64,
) -> Result<SyncOutcome, RunError> {
    let n = topo.n_pes;
    let ny = subs[0].ny;
    let t = *topo;
    let window = crate::comm::SharedWindow::new(
        "halo",
        topo.n_channels(),
        message(Side::Bottom, vec![0.0; ny], 0),
        move |c| t.is_registered(c),
    );
    let barrier = Barrier::new(n);
    let slots: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let max_iters = (config.step_limit / n as u64).max(1);
    let tick = config.delays.tick_us;
    let start = Instant::now();

    type ThreadResult = Result<(Subdomain, u64, Vec<(ChannelId, u64)>, bool, f64), RunError>;
    let results: Vec<ThreadResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = subs
            .into_iter()
            .enumerate()
            .map(|(pe, mut sub)| {
                let (window, barrier, slots) = (&window, &barrier, &slots);
                let mut delays = config.delays.sampler(config.seed.wrapping_add(pe as u64));
                scope.spawn(move || -> ThreadResult {
                    let mut counts: Vec<(ChannelId, u64)> =
                        Side::BOTH.iter().filter_map(|&s| t.outgoing(pe, s)).map(|c| (c, 0)).collect();
                    let mut iter = 0u64;
                    loop {
                        let d = delays.compute(pe);
                        if tick > 0 && d > 0 {
                            std::thread::sleep(Duration::from_micros(d * tick));
                        }
                        let edges = sub.sor_sweep(config.omega);
                        iter += 1;
                        for (ch, count) in &mut counts {
                            let side = if ch.0 % 2 == 0 { Side::Bottom } else { Side::Top };
                            window.put(*ch, message(side, edges[side.index()].values.clone(), iter))?;
                            *count += 1;
                        }
                        barrier.wait();
                        for ghost in Side::BOTH {
                            if let Some(ch) = t.incoming(pe, ghost) {
                                let d = window.read_fresh(ch)?;
                                sub.set_ghost(ghost, &d.message.values.values);
                            }
                        }
                        slots[pe].store(sub.local_residual().to_bits(), Ordering::SeqCst);
                        barrier.wait();
                        let global = slots
                            .iter()
                            .map(|s| f64::from_bits(s.load(Ordering::SeqCst)))
                            .fold(0.0, max_nan)
                            / scale;
                        // nobody may overwrite a slot before everyone has read it
                        barrier.wait();
                        if !global.is_finite() {
                            return Err(RunError::Diverged { iter });
                        }
                        let timed_out = iter >= max_iters;
                        if global < config.tol || timed_out {
                            return Ok((sub, iter, counts, timed_out && global >= config.tol, global));
                        }
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(RunError::ThreadPanic)))
            .collect()
    });
    let wall = start.elapsed().as_secs_f64() * 1e3;

    let mut out = SyncOutcome {
        subs: Vec::with_capacity(n),
        iterations: 0,
        halo: vec![0; topo.n_channels()],
        control: 0,
        virtual_time: None,
        wall_time_ms: Some(wall),
        timed_out: false,
        last_relative: 0.0,
        comm_log: Vec::new(),
    };
    for r in results {
        let (sub, iter, counts, timed_out, rel) = r?;
        out.subs.push(sub);
        out.iterations = iter;
        out.timed_out |= timed_out;
        out.last_relative = rel;
        out.control += iter;
        for (ch, c) in counts {
            out.halo[ch.0] = c;
        }
    }
    Ok(out)
}
