use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::comm::{write_jsonl, CommEvent};
use crate::convergence::ConvEvent;
use crate::event::{write_threshold_csv, ThresholdTraceRow};
use crate::grid::{BoundaryCondition, Side};

use super::RunConfig;

/// Halo puts on one channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCount {
    pub sender: usize,
    pub side: Side,
    pub receiver: usize,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    TimedOut { diagnostic: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub nx: usize,
    pub ny: usize,
    pub bc: BoundaryCondition,
    /// Sweeps per PE; idle polls are not counted.
    pub pe_iterations: Vec<u64>,
    pub halo_messages: Vec<ChannelCount>,
    pub total_halo_messages: u64,
    /// Flag-only halo puts, convergence reports, broadcasts and reduction
    /// contributions.
    pub control_messages: u64,
    pub virtual_time: Option<u64>,
    pub wall_time_ms: Option<f64>,
    /// `max |b|`, the residual of the zero field.
    pub initial_residual: f64,
    pub initial_relative_residual: f64,
    /// From the assembled global field after termination.
    pub final_relative_residual: f64,
    pub outcome: Outcome,
    pub solution: Vec<f64>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    /// Passed the solver's acceptance test: terminated normally with the
    /// assembled relative residual below tolerance.
    pub fn passed(&self) -> bool {
        self.converged() && self.final_relative_residual < self.config.tol
    }

    pub fn mean_subtracted_solution(&self) -> Vec<f64> {
        mean_subtracted(&self.solution)
    }

    /// Virtual completion time, or wall time in milliseconds for the threaded
    /// backend.
    pub fn elapsed(&self) -> f64 {
        self.virtual_time
            .map(|t| t as f64)
            .or(self.wall_time_ms)
            .unwrap_or(0.0)
    }
}

pub fn mean_subtracted(p: &[f64]) -> Vec<f64> {
    let mean = crate::grid::compensated_sum(p) / p.len().max(1) as f64;
    p.iter().map(|v| v - mean).collect()
}

/// Logs collected by a traced run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    /// Window puts and reads; virtual backend only.
    pub comm: Vec<CommEvent>,
    pub convergence: Vec<ConvEvent>,
    pub thresholds: Vec<ThresholdTraceRow>,
}

impl RunTrace {
    pub fn write_comm<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_jsonl(w, &self.comm)
    }

    pub fn write_convergence<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_jsonl(w, &self.convergence)
    }

    pub fn write_thresholds<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        write_threshold_csv(w, &self.thresholds)
    }
}
