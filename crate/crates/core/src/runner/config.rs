use serde::{Deserialize, Serialize};

use crate::comm::DelayModel;
use crate::convergence::{RestartRule, DEFAULT_WINDOW};
use crate::event::EventParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Lockstep sweeps, halo exchange and a global residual reduction every
    /// iteration.
    Synchronous,
    /// Send every sweep, never wait.
    Asynchronous,
    /// Send when the boundary norm crosses the adaptive threshold.
    EventTriggered(EventParams),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Synchronous => "sync",
            PolicyKind::Asynchronous => "async",
            PolicyKind::EventTriggered(_) => "event",
        }
    }

    pub fn event_params(&self) -> Option<&EventParams> {
        match self {
            PolicyKind::EventTriggered(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Single-threaded deterministic scheduler.
    #[default]
    Virtual,
    /// One OS thread per PE.
    Threads,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_pes: usize,
    pub policy: PolicyKind,
    pub backend: Backend,
    pub omega: f64,
    /// Relative residual tolerance.
    pub tol: f64,
    /// Consecutive below-tolerance sweeps required for local convergence.
    pub window: u32,
    pub restart: RestartRule,
    pub delays: DelayModel,
    pub seed: u64,
    /// Upper bound on scheduler steps (sweeps plus polls) over all PEs.
    pub step_limit: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_pes: 8,
            policy: PolicyKind::Asynchronous,
            backend: Backend::Virtual,
            omega: 1.5,
            tol: 1e-8,
            window: DEFAULT_WINDOW,
            restart: RestartRule::default(),
            delays: DelayModel::default(),
            seed: 0,
            step_limit: 20_000_000,
        }
    }
}

impl RunConfig {
    pub fn with_policy(mut self, policy: PolicyKind) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_pes(mut self, n_pes: usize) -> Self {
        self.n_pes = n_pes;
        self
    }
}
