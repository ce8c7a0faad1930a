//! Horizon x decay parameter sweeps against the asynchronous baseline.

use std::io::Write;

use serde::Serialize;

use crate::event::EventParams;
use crate::grid::ProblemInstance;

use super::{run, PolicyKind, RunConfig, RunReport};

/// One sweep cell. `d == 0` marks the asynchronous baseline, which sends
/// 100% of its messages by definition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub h: f64,
    pub d: f64,
    pub seed: u64,
    pub virtual_time: Option<u64>,
    pub wall_time_ms: Option<f64>,
    pub total_halo_msgs: Option<u64>,
    pub msg_percent: Option<f64>,
    pub final_residual: Option<f64>,
    /// Why the run failed, if it did. Not part of the CSV.
    #[serde(skip)]
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(h: f64, d: f64, seed: u64, error: String) -> Self {
        SweepRow {
            h,
            d,
            seed,
            virtual_time: None,
            wall_time_ms: None,
            total_halo_msgs: None,
            msg_percent: None,
            final_residual: None,
            error: Some(error),
        }
    }

    fn from_report(h: f64, d: f64, seed: u64, r: &RunReport, baseline: Option<u64>) -> Self {
        let error = (!r.passed()).then(|| match &r.outcome {
            super::Outcome::TimedOut { .. } => "timed out".to_string(),
            super::Outcome::Converged => format!("final residual {:e} not below tolerance", r.final_relative_residual),
        });
        SweepRow {
            h,
            d,
            seed,
            virtual_time: r.virtual_time,
            wall_time_ms: r.wall_time_ms,
            total_halo_msgs: Some(r.total_halo_messages),
            msg_percent: baseline
                .filter(|&b| b > 0)
                .map(|b| 100.0 * r.total_halo_messages as f64 / b as f64),
            final_residual: Some(r.final_relative_residual),
            error,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub h_list: Vec<f64>,
    pub d_list: Vec<f64>,
    pub repeats: usize,
}

/// Runs the grid for seeds `base.seed .. base.seed + repeats`. Warm-up and
/// history length come from `base.policy` when it is event-triggered.
pub fn sweep_experiment(
    instance: &ProblemInstance,
    base: &RunConfig,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>, String> {
    if spec.h_list.is_empty() || spec.d_list.is_empty() || spec.repeats == 0 {
        return Err("sweep needs at least one h, one d and one repeat".into());
    }
    let template = base.policy.event_params().copied().unwrap_or_default();
    let mut rows = Vec::new();
    for r in 0..spec.repeats {
        let seed = base.seed + r as u64;
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.policy = PolicyKind::Asynchronous;
        let baseline = run(instance, &cfg);
        let baseline_msgs = baseline.as_ref().ok().map(|b| b.total_halo_messages);
        for &h in &spec.h_list {
            for &d in &spec.d_list {
                if d == 0.0 {
                    rows.push(match &baseline {
                        Ok(b) => SweepRow::from_report(h, d, seed, b, baseline_msgs),
                        Err(e) => SweepRow::failed(h, d, seed, e.to_string()),
                    });
                    continue;
                }
                cfg.policy = PolicyKind::EventTriggered(EventParams {
                    horizon: h,
                    decay: d,
                    ..template
                });
                rows.push(match run(instance, &cfg) {
                    Ok(rep) => SweepRow::from_report(h, d, seed, &rep, baseline_msgs),
                    Err(e) => SweepRow::failed(h, d, seed, e.to_string()),
                });
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "h,d,seed,virtual_time,wall_time_ms,total_halo_msgs,msg_percent,final_residual";

pub fn write_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean message percentage over seeds for one `(h, d)` cell, ignoring failed
/// rows.
pub fn mean_percent(rows: &[SweepRow], h: f64, d: f64) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.h == h && r.d == d)
        .filter_map(|r| r.msg_percent)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
