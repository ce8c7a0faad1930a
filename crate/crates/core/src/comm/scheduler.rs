//! Deterministic virtual-time scheduler.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::delay::DelaySampler;
use super::CommError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Running,
    Finished,
}

/// State handed to workers by the scheduler; owns the delay draws.
pub trait VirtualNet {
    fn delays(&mut self) -> &mut DelaySampler;
}

pub trait VirtualWorker<N> {
    type Error: From<CommError>;
    /// Whether the next step is a compute step (sweep) rather than a poll.
    fn busy(&self) -> bool;
    /// Runs one step whose effects all happen at virtual time `now`.
    fn step(&mut self, now: u64, net: &mut N) -> Result<Step, Self::Error>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleOutcome {
    /// Virtual time at which each worker finished, if it did.
    pub finish_times: Vec<Option<u64>>,
    /// Time of the last processed step.
    pub end_time: u64,
    pub steps: u64,
    pub timed_out: bool,
}

/// Runs workers cooperatively until all finish or `step_limit` steps have
/// been processed.
///
/// Each worker first spends a drawn delay (compute or idle cost, depending on
/// [`VirtualWorker::busy`]) and then performs its step at the end of that
/// interval. Steps run in `(time, worker index)` order, so the run is a pure
/// function of the workers and the sampler seed.
pub fn run_virtual<N, W>(workers: &mut [W], net: &mut N, step_limit: u64) -> Result<ScheduleOutcome, W::Error>
where
    N: VirtualNet,
    W: VirtualWorker<N>,
{
    if workers.is_empty() {
        return Err(CommError::NoWorkers.into());
    }
    let mut queue = BinaryHeap::new();
    for (pe, w) in workers.iter().enumerate() {
        let d = draw(w, pe, net);
        queue.push(Reverse((d, pe)));
    }
    let mut outcome = ScheduleOutcome {
        finish_times: vec![None; workers.len()],
        end_time: 0,
        steps: 0,
        timed_out: false,
    };
    while let Some(Reverse((now, pe))) = queue.pop() {
        if outcome.steps >= step_limit {
            outcome.timed_out = true;
            break;
        }
        outcome.steps += 1;
        outcome.end_time = now;
        match workers[pe].step(now, net)? {
            Step::Finished => outcome.finish_times[pe] = Some(now),
            Step::Running => {
                let d = draw(&workers[pe], pe, net);
                queue.push(Reverse((now + d, pe)));
            }
        }
    }
    Ok(outcome)
}

fn draw<N: VirtualNet, W: VirtualWorker<N>>(w: &W, pe: usize, net: &mut N) -> u64 {
    if w.busy() {
        net.delays().compute(pe)
    } else {
        net.delays().idle()
    }
}
