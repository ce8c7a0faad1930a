//! Asynchronous and event-triggered solvers with one OS thread per PE.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crate::comm::Step;

use super::nets::{SharedHandle, SharedNet};
use super::worker::{PeWorker, Topology};
use super::{RunConfig, RunError};

/// Shortest pause between polls of a locally converged PE, so idle threads
/// leave the CPU to the ones still sweeping.
const MIN_POLL_PAUSE: Duration = Duration::from_micros(50);

pub struct ThreadOutcome {
    pub workers: Vec<PeWorker>,
    pub wall_time_ms: f64,
}

pub fn run(workers: Vec<PeWorker>, topo: &Topology, ny: usize, config: &RunConfig) -> Result<ThreadOutcome, RunError> {
    let net = SharedNet::new(topo, ny);
    let abort = AtomicBool::new(false);
    let steps = AtomicU64::new(0);
    let tick = config.delays.tick_us;
    let start = Instant::now();

    let results: Vec<Result<PeWorker, RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .into_iter()
            .map(|mut w| {
                let (net, abort, steps) = (&net, &abort, &steps);
                let mut delays = config.delays.sampler(config.seed.wrapping_add(w.pe as u64));
                scope.spawn(move || -> Result<PeWorker, RunError> {
                    let mut handle = SharedHandle(net);
                    while !abort.load(Ordering::Relaxed) {
                        let busy = w.busy();
                        let d = if busy { delays.compute(w.pe) } else { delays.idle() };
                        let pause = Duration::from_micros(d * tick);
                        if busy {
                            if !pause.is_zero() {
                                std::thread::sleep(pause);
                            }
                        } else {
                            std::thread::sleep(pause.max(MIN_POLL_PAUSE));
                        }
                        match w.step(&mut handle) {
                            Ok(Step::Finished) => break,
                            Ok(Step::Running) => {}
                            Err(e) => {
                                abort.store(true, Ordering::Relaxed);
                                return Err(e);
                            }
                        }
                        if steps.fetch_add(1, Ordering::Relaxed) >= config.step_limit {
                            abort.store(true, Ordering::Relaxed);
                        }
                    }
                    Ok(w)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(RunError::ThreadPanic)))
            .collect()
    });
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let workers = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ThreadOutcome {
        workers,
        wall_time_ms,
    })
}
