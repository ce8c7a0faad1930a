//! Local convergence with hysteresis, restart on new neighbor values, and the
//! master's global convergence decision.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConvError {
    #[error("tolerance must be positive and finite, got {0}")]
    Tolerance(f64),
    #[error("convergence window must be at least 1")]
    Window,
    #[error("report from PE {pe} but the master tracks {n} PEs")]
    UnknownPe { pe: usize, n: usize },
}

/// Default number of consecutive below-tolerance sweeps before a PE declares
/// local convergence.
pub const DEFAULT_WINDOW: u32 = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalConvState {
    tol: f64,
    window: u32,
    streak: u32,
    converged: bool,
}

impl LocalConvState {
    pub fn new(tol: f64, window: u32) -> Result<Self, ConvError> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(ConvError::Tolerance(tol));
        }
        if window == 0 {
            return Err(ConvError::Window);
        }
        Ok(LocalConvState {
            tol,
            window,
            streak: 0,
            converged: false,
        })
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn streak(&self) -> u32 {
        self.streak
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Feeds one sweep's relative residual. Returns true on the transition to
    /// converged.
    pub fn update_local(&mut self, relative_residual: f64) -> bool {
        if relative_residual < self.tol {
            self.streak = self.streak.saturating_add(1);
        } else {
            self.streak = 0;
        }
        if !self.converged && self.streak >= self.window {
            self.converged = true;
            return true;
        }
        false
    }

    pub fn nullify(&mut self) {
        self.converged = false;
        self.streak = 0;
    }
}

/// How a locally converged PE judges a fresh neighbor message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RestartRule {
    /// Restart when the fresh boundary's L1 norm differs from the norm of the
    /// ghost row it replaces by at least `threshold`. With threshold 0 every
    /// fresh arrival restarts.
    NormChange { threshold: f64 },
    /// Install the fresh ghosts, recompute the local relative residual, and
    /// restart only if it is no longer below tolerance.
    #[default]
    ResidualRecheck,
}

/// A fresh boundary message compared with the ghost row it replaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreshArrival {
    pub fresh_norm: f64,
    pub ghost_norm: f64,
}

/// Norm-change restart test. Returns true if the state was nullified.
pub fn nullify_on_new_values(
    state: &mut LocalConvState,
    fresh: &[FreshArrival],
    threshold: f64,
) -> bool {
    if !state.converged {
        return false;
    }
    if fresh
        .iter()
        .any(|f| (f.fresh_norm - f.ghost_norm).abs() >= threshold)
    {
        state.nullify();
        return true;
    }
    false
}

/// A PE's convergence report to the master. `sent` holds the sequence number
/// of the last put on each outgoing halo channel, `consumed` the sequence
/// number of the last message read on each incoming one.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConvReport {
    pub pe: usize,
    pub iter: u64,
    pub converged: bool,
    pub sent: Vec<(usize, u64)>,
    pub consumed: Vec<(usize, u64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterState {
    latest: Vec<Option<ConvReport>>,
    broadcast: bool,
}

impl MasterState {
    pub fn new(n_pes: usize) -> Self {
        MasterState {
            latest: vec![None; n_pes],
            broadcast: false,
        }
    }

    pub fn global_converged(&self) -> bool {
        self.broadcast
    }

    pub fn flags(&self) -> Vec<bool> {
        self.latest
            .iter()
            .map(|r| r.as_ref().is_some_and(|r| r.converged))
            .collect()
    }

    /// Every PE's latest report is converged and every halo message that was
    /// reported sent has been reported consumed.
    fn quiescent(&self) -> bool {
        let mut sent: BTreeMap<usize, u64> = BTreeMap::new();
        let mut consumed: BTreeMap<usize, u64> = BTreeMap::new();
        for r in &self.latest {
            let Some(r) = r else { return false };
            if !r.converged {
                return false;
            }
            sent.extend(r.sent.iter().copied());
            consumed.extend(r.consumed.iter().copied());
        }
        sent.iter()
            .all(|(ch, s)| consumed.get(ch).copied().unwrap_or(0) == *s)
    }

    /// Records a report. Returns true exactly once, when the global
    /// convergence broadcast should be emitted.
    pub fn master_step(&mut self, report: ConvReport) -> Result<bool, ConvError> {
        let n = self.latest.len();
        let slot = self
            .latest
            .get_mut(report.pe)
            .ok_or(ConvError::UnknownPe { pe: report.pe, n })?;
        *slot = Some(report);
        if self.broadcast || !self.quiescent() {
            return Ok(false);
        }
        self.broadcast = true;
        Ok(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvEventKind {
    Converged,
    Nullified,
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvEvent {
    pub pe: usize,
    pub iter: u64,
    pub event: ConvEventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
}
