//! Full solvers: synchronous, asynchronous and event-triggered, on the
//! virtual-time or threaded backend.

mod config;
pub mod direct;
mod nets;
mod report;
pub mod sweep;
mod sync;
mod threads;
mod worker;

use thiserror::Error;

use crate::comm::{run_virtual, CommError};
use crate::convergence::{ConvError, ConvEvent, ConvEventKind};
use crate::event::EventError;
use crate::grid::{partition_rows, GridError, ProblemInstance, Side, Subdomain};

pub use config::{Backend, PolicyKind, RunConfig};
pub use report::{mean_subtracted, ChannelCount, Outcome, RunReport, RunTrace};
pub use worker::Topology;

use nets::VirtualPeNet;
use worker::{PeWorker, WorkerSetup};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Conv(#[from] ConvError),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("residual became non-finite at iteration {iter}")]
    Diverged { iter: u64 },
    #[error("a worker thread panicked")]
    ThreadPanic,
}

fn check(config: &RunConfig) -> Result<(), RunError> {
    if !(config.omega > 0.0 && config.omega < 2.0) {
        return Err(RunError::Config(format!("omega must lie in (0, 2), got {}", config.omega)));
    }
    if let Some(p) = config.policy.event_params() {
        p.validate()?;
    }
    if config.n_pes == 0 {
        return Err(RunError::Config("at least one PE is required".into()));
    }
    Ok(())
}

/// Solves `instance` under `config`.
pub fn run(instance: &ProblemInstance, config: &RunConfig) -> Result<RunReport, RunError> {
    run_traced(instance, config, false).map(|(r, _)| r)
}

/// As [`run`], also collecting communication, convergence and threshold
/// logs when `trace` is set.
pub fn run_traced(
    instance: &ProblemInstance,
    config: &RunConfig,
    trace: bool,
) -> Result<(RunReport, RunTrace), RunError> {
    check(config)?;
    instance.validate()?;
    // rejects bad decompositions before anything else
    let parts = partition_rows(instance.nx, config.n_pes)?;
    let coeffs = instance.coefficients()?;
    let subs = parts
        .iter()
        .enumerate()
        .map(|(pe, &(r0, r1))| Subdomain::new(instance, &coeffs, pe, r0, r1))
        .collect::<Result<Vec<_>, _>>()?;
    let initial = instance.rhs_scale();
    let scale = if initial > 0.0 { initial } else { 1.0 };
    let topo = Topology::new(config.n_pes, instance.bc);

    let mut report = RunReport {
        config: config.clone(),
        nx: instance.nx,
        ny: instance.ny,
        bc: instance.bc,
        pe_iterations: Vec::new(),
        halo_messages: Vec::new(),
        total_halo_messages: 0,
        control_messages: 0,
        virtual_time: None,
        wall_time_ms: None,
        initial_residual: initial,
        initial_relative_residual: initial / scale,
        final_relative_residual: f64::NAN,
        outcome: Outcome::Converged,
        solution: Vec::new(),
    };
    let mut trace_out = RunTrace::default();
    let mut halo = vec![0u64; topo.n_channels()];

    let final_subs = if config.policy == PolicyKind::Synchronous {
        let out = match config.backend {
            Backend::Virtual => sync::run_virtual(subs, &topo, config, scale, trace)?,
            Backend::Threads => sync::run_threads(subs, &topo, config, scale)?,
        };
        report.pe_iterations = vec![out.iterations; config.n_pes];
        report.control_messages = out.control;
        report.virtual_time = out.virtual_time;
        report.wall_time_ms = out.wall_time_ms;
        halo = out.halo;
        if out.timed_out {
            report.outcome = Outcome::TimedOut {
                diagnostic: format!(
                    "{} lockstep iterations, global relative residual {:.3e}",
                    out.iterations, out.last_relative
                ),
            };
        } else if trace {
            trace_out.convergence.push(ConvEvent {
                pe: 0,
                iter: out.iterations,
                event: ConvEventKind::Global,
                t: out.virtual_time,
            });
        }
        trace_out.comm = out.comm_log;
        out.subs
    } else {
        let setup = WorkerSetup {
            omega: config.omega,
            policy: config.policy,
            restart: config.restart,
            tol: config.tol,
            window: config.window,
            scale,
            tracing: trace,
        };
        let mut workers = subs
            .into_iter()
            .enumerate()
            .map(|(pe, sub)| PeWorker::new(pe, sub, &topo, &setup))
            .collect::<Result<Vec<_>, _>>()?;
        let timed_out = match config.backend {
            Backend::Virtual => {
                let mut net = VirtualPeNet::new(&topo, instance.ny, config.delays.sampler(config.seed), trace);
                let outcome = run_virtual(&mut workers, &mut net, config.step_limit)?;
                report.virtual_time = Some(outcome.end_time);
                trace_out.comm = net.take_log();
                outcome.timed_out
            }
            Backend::Threads => {
                let out = threads::run(workers, &topo, instance.ny, config)?;
                report.wall_time_ms = Some(out.wall_time_ms);
                workers = out.workers;
                workers.iter().any(|w| !w.finished)
            }
        };
        if timed_out {
            let lines: Vec<String> = workers.iter().map(|w| w.diagnostic()).collect();
            report.outcome = Outcome::TimedOut {
                diagnostic: lines.join("\n"),
            };
        }
        for w in &mut workers {
            for c in w.halo_counts() {
                halo[c.ch.0] = c.count;
            }
            report.control_messages += w.control_sent;
            report.pe_iterations.push(w.iter);
            trace_out.convergence.append(&mut w.conv_events);
            trace_out.thresholds.append(&mut w.trace_rows);
        }
        trace_out.convergence.sort_by_key(|e| e.t);
        workers.into_iter().map(|w| w.sub).collect()
    };

    for pe in 0..config.n_pes {
        for side in Side::BOTH {
            if let Some(ch) = topo.outgoing(pe, side) {
                report.halo_messages.push(ChannelCount {
                    sender: pe,
                    side,
                    receiver: topo.neighbor(pe, side).unwrap_or(pe),
                    count: halo[ch.0],
                });
            }
        }
    }
    report.total_halo_messages = report.halo_messages.iter().map(|c| c.count).sum();
    report.solution = final_subs.iter().flat_map(|s| s.owned().iter().copied()).collect();
    report.final_relative_residual = instance.residual_max(&coeffs, &report.solution) / scale;
    Ok((report, trace_out))
}
