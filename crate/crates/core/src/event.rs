//! Event-triggered send decisions and receiver-side ghost extrapolation.
//!
//! The sender tracks the L1 norm of each outgoing boundary vector. It sends
//! when the norm has moved at least `tau = tau_star * d^m` away from the norm
//! at the last send, where `m` counts iterations since that send and
//! `tau_star = h * s` with `s` the mean per-interval slope of the norm over
//! the most recent sends.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("decay must lie in (0, 1), got {0}")]
    Decay(f64),
    #[error("horizon must be finite and non-negative, got {0}")]
    Horizon(f64),
    #[error("history must hold at least 2 events, got {0}")]
    History(usize),
    #[error("extrapolation requested while the neighbor is locally converged")]
    NeighborConverged,
    #[error("extrapolation requested before any message was received")]
    NoHistory,
}

/// Threshold parameters. `horizon = 0` makes every post-warm-up iteration
/// send, which reduces the policy to plain asynchronous exchange.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    pub horizon: f64,
    pub decay: f64,
    pub warmup: u64,
    pub history: usize,
}

impl Default for EventParams {
    fn default() -> Self {
        EventParams {
            horizon: 200.0,
            decay: 0.8,
            warmup: 200,
            history: 20,
        }
    }
}

impl EventParams {
    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(EventError::Decay(self.decay));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(EventError::Horizon(self.horizon));
        }
        if self.history < 2 {
            return Err(EventError::History(self.history));
        }
        Ok(())
    }
}

/// Sender-side threshold state for one outgoing channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdState {
    params: EventParams,
    last_sent_norm: f64,
    history: VecDeque<(u64, f64)>,
    tau_star: f64,
    /// Iterations since the last send.
    m: u32,
}

/// Base threshold before two sends have been recorded.
pub const INITIAL_TAU_STAR: f64 = 0.0;

impl ThresholdState {
    pub fn new(params: EventParams) -> Result<Self, EventError> {
        params.validate()?;
        Ok(ThresholdState {
            params,
            last_sent_norm: 0.0,
            history: VecDeque::with_capacity(params.history),
            tau_star: INITIAL_TAU_STAR,
            m: 0,
        })
    }

    pub fn params(&self) -> &EventParams {
        &self.params
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    pub fn idle_iterations(&self) -> u32 {
        self.m
    }

    pub fn last_sent_norm(&self) -> f64 {
        self.last_sent_norm
    }

    pub fn history(&self) -> impl Iterator<Item = &(u64, f64)> {
        self.history.iter()
    }

    /// Threshold in force for the current iteration.
    pub fn threshold(&self) -> f64 {
        self.tau_star * self.params.decay.powi(self.m as i32)
    }

    /// Send decision. Always true during warm-up; otherwise true iff the norm
    /// moved by at least the current threshold. A negative decision advances
    /// the decay; a positive one must be followed by [`Self::on_send`].
    pub fn should_send(&mut self, current_norm: f64, current_iter: u64) -> bool {
        if current_iter < self.params.warmup {
            return true;
        }
        if (current_norm - self.last_sent_norm).abs() >= self.threshold() {
            true
        } else {
            self.m = self.m.saturating_add(1);
            false
        }
    }

    /// Records a send at `iter` and recomputes `tau_star`.
    pub fn on_send(&mut self, norm: f64, iter: u64) {
        match self.history.back_mut() {
            // A second send in the same iteration replaces the first.
            Some(last) if last.0 >= iter => *last = (last.0, norm),
            _ => {
                if self.history.len() == self.params.history {
                    self.history.pop_front();
                }
                self.history.push_back((iter, norm));
            }
        }
        self.last_sent_norm = norm;
        self.tau_star = match mean_slope(self.history.iter().copied()) {
            Some(s) => s * self.params.horizon,
            None => INITIAL_TAU_STAR,
        };
        self.m = 0;
    }
}

/// Unweighted mean of `|d norm| / d iter` over consecutive pairs.
fn mean_slope(events: impl Iterator<Item = (u64, f64)>) -> Option<f64> {
    let mut prev: Option<(u64, f64)> = None;
    let (mut total, mut count) = (0.0, 0usize);
    for (it, norm) in events {
        if let Some((pit, pnorm)) = prev {
            total += (norm - pnorm).abs() / (it - pit) as f64;
            count += 1;
        }
        prev = Some((it, norm));
    }
    (count > 0).then(|| total / count as f64)
}

/// Receiver-side record of the last three boundary vectors received on one
/// channel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GhostHistory {
    entries: VecDeque<(u64, Vec<f64>)>,
    pub neighbor_converged: bool,
}

/// Extrapolated values may stray at most this many times the value range of
/// the last received vector before falling back to that vector.
pub const EXTRAPOLATION_CLAMP: f64 = 10.0;

const GHOST_DEPTH: usize = 3;

/// Relative allowance for rounding when comparing successive slopes.
const TREND_SLACK: f64 = 1e-9;

impl GhostHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn latest(&self) -> Option<&[f64]> {
        self.entries.back().map(|(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores a vector received at receiver iteration `iter`. A second vector
    /// at the same iteration replaces the newest entry.
    pub fn record(&mut self, iter: u64, values: &[f64]) {
        match self.entries.back_mut() {
            Some((t, v)) if *t >= iter => {
                v.clear();
                v.extend_from_slice(values);
            }
            _ => {
                if self.entries.len() == GHOST_DEPTH {
                    self.entries.pop_front();
                }
                self.entries.push_back((iter, values.to_vec()));
            }
        }
    }

    /// Linear extrapolation of the ghost row to `current_iter` from the two
    /// newest vectors, held constant beyond one arrival interval past the
    /// newest. With three vectors on hand, an entry is only extrapolated
    /// while its per-iteration slope keeps its sign and does not grow;
    /// otherwise it is held at the newest value.
    pub fn extrapolate(&self, current_iter: u64) -> Result<Vec<f64>, EventError> {
        if self.neighbor_converged {
            return Err(EventError::NeighborConverged);
        }
        let n = self.entries.len();
        let (t2, g2) = self.entries.back().ok_or(EventError::NoHistory)?;
        if n < 2 {
            return Ok(g2.clone());
        }
        let (t1, g1) = &self.entries[n - 2];
        let earlier = (n > 2).then(|| &self.entries[n - 3]);
        // Look ahead at most one observed arrival interval.
        let gap = t2 - t1;
        let ahead = current_iter.saturating_sub(*t2).min(gap) as f64;
        let out: Vec<f64> = (0..g2.len())
            .map(|k| {
                let slope = (g2[k] - g1[k]) / gap as f64;
                let damped = match earlier {
                    Some((t0, g0)) => {
                        let before = (g1[k] - g0[k]) / (t1 - t0) as f64;
                        slope * before > 0.0 && slope.abs() <= before.abs() * (1.0 + TREND_SLACK)
                    }
                    None => true,
                };
                if damped {
                    g2[k] + slope * ahead
                } else {
                    g2[k]
                }
            })
            .collect();

        let (lo, hi) = g2
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        let drift = out
            .iter()
            .zip(g2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if drift > EXTRAPOLATION_CLAMP * range {
            return Ok(g2.clone());
        }
        Ok(out)
    }
}

/// One row of a per-channel threshold trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdTraceRow {
    pub pe: usize,
    pub side: crate::grid::Side,
    pub iter: u64,
    pub norm: f64,
    pub tau: f64,
    pub sent: bool,
}

pub fn write_threshold_csv<W: Write>(w: W, rows: &[ThresholdTraceRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(horizon: f64, decay: f64, warmup: u64) -> EventParams {
        EventParams {
            horizon,
            decay,
            warmup,
            history: 20,
        }
    }

    #[test]
    fn warmup_always_sends() {
        let mut s = ThresholdState::new(params(1e9, 0.99, 100)).unwrap();
        s.on_send(1.0, 0);
        s.on_send(1000.0, 1);
        for it in 2..100 {
            assert!(s.should_send(1000.0, it));
            s.on_send(1000.0, it);
        }
    }

    #[test]
    fn decayed_threshold_blocks_small_change() {
        let mut s = ThresholdState::new(params(1.0, 0.8, 0)).unwrap();
        s.tau_star = 2.0;
        s.m = 3;
        s.last_sent_norm = 10.0;
        assert!((s.threshold() - 1.024).abs() < 1e-15);
        assert!(!s.should_send(11.0, 50));
        assert_eq!(s.idle_iterations(), 4);
    }

    #[test]
    fn without_decay_a_flat_trajectory_stalls() {
        // decay would shrink the threshold; pin m at 0 to model its absence
        let mut s = ThresholdState::new(params(200.0, 0.8, 0)).unwrap();
        s.on_send(5.0, 100);
        s.on_send(7.0, 200);
        assert_eq!(s.tau_star(), 4.0);
        let mut fired = false;
        for it in 201..20_000 {
            s.m = 0;
            let norm = 7.0 + 3.9 * (1.0 - (-((it - 200) as f64) / 50.0).exp());
            fired |= s.should_send(norm, it);
        }
        assert!(!fired, "a fixed threshold never re-fires once changes flatten out");

        // With decay the same trajectory fires.
        let mut s = ThresholdState::new(params(200.0, 0.8, 0)).unwrap();
        s.on_send(5.0, 100);
        s.on_send(7.0, 200);
        let fired_at = (201..20_000u64).find(|&it| {
            let norm = 7.0 + 3.9 * (1.0 - (-((it - 200) as f64) / 50.0).exp());
            s.should_send(norm, it)
        });
        assert!(fired_at.is_some());
    }

    #[test]
    fn two_event_slope() {
        let mut s = ThresholdState::new(params(200.0, 0.8, 0)).unwrap();
        s.on_send(5.0, 100);
        assert_eq!(s.tau_star(), INITIAL_TAU_STAR);
        s.on_send(7.0, 200);
        assert!((s.tau_star() - 4.0).abs() < 1e-12);
        assert_eq!(s.idle_iterations(), 0);
        assert_eq!(s.last_sent_norm(), 7.0);
    }

    #[test]
    fn constant_norms_give_zero_threshold() {
        let mut s = ThresholdState::new(params(500.0, 0.5, 0)).unwrap();
        for it in [10, 20, 30, 45] {
            s.on_send(3.0, it);
        }
        assert_eq!(s.tau_star(), 0.0);
        assert!(s.should_send(3.0, 46));
    }

    #[test]
    fn twenty_event_average_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut s = ThresholdState::new(params(150.0, 0.9, 0)).unwrap();
        let mut events = Vec::new();
        let mut it = 0u64;
        for _ in 0..35 {
            it += rng.random_range(1..40);
            let norm = 50.0 + it as f64 * 0.01 + rng.random_range(-0.5..0.5);
            s.on_send(norm, it);
            events.push((it, norm));
        }
        let kept = &events[events.len() - 20..];
        let mut sum = 0.0;
        for k in 1..kept.len() {
            let dn = kept[k].1 - kept[k - 1].1;
            let di = (kept[k].0 - kept[k - 1].0) as f64;
            sum += if dn < 0.0 { -dn } else { dn } / di;
        }
        let want = sum / 19.0 * 150.0;
        assert!((s.tau_star() - want).abs() <= 1e-12 * want);
        assert_eq!(s.history().count(), 20);
    }

    #[test]
    fn history_is_strictly_increasing() {
        let mut s = ThresholdState::new(params(10.0, 0.5, 0)).unwrap();
        s.on_send(1.0, 5);
        s.on_send(2.0, 5);
        s.on_send(3.0, 9);
        let h: Vec<_> = s.history().copied().collect();
        assert_eq!(h, vec![(5, 2.0), (9, 3.0)]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(ThresholdState::new(params(1.0, 1.0, 0)), Err(EventError::Decay(1.0)));
        assert_eq!(ThresholdState::new(params(1.0, 0.0, 0)), Err(EventError::Decay(0.0)));
        assert!(ThresholdState::new(params(-1.0, 0.5, 0)).is_err());
        let mut p = params(1.0, 0.5, 0);
        p.history = 1;
        assert_eq!(ThresholdState::new(p), Err(EventError::History(1)));
    }

    #[test]
    fn linear_extrapolation() {
        let mut g = GhostHistory::new();
        g.record(10, &[1.0, 1.0]);
        g.record(20, &[3.0, 3.0]);
        // range of [3, 3] is zero, so compare against a vector with spread
        let mut h = GhostHistory::new();
        h.record(10, &[1.0, 0.0]);
        h.record(20, &[3.0, 2.0]);
        assert_eq!(h.extrapolate(25).unwrap(), vec![4.0, 3.0]);
        // flat vectors have zero range and fall back
        assert_eq!(g.extrapolate(25).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn identical_vectors_extrapolate_to_themselves() {
        let mut g = GhostHistory::new();
        g.record(3, &[1.0, -2.0, 0.5]);
        g.record(8, &[1.0, -2.0, 0.5]);
        for t in [8, 9, 100, 10_000] {
            assert_eq!(g.extrapolate(t).unwrap(), vec![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn single_entry_is_returned_unchanged() {
        let mut g = GhostHistory::new();
        g.record(4, &[2.0, 5.0]);
        assert_eq!(g.extrapolate(40).unwrap(), vec![2.0, 5.0]);
    }

    #[test]
    fn runaway_extrapolation_is_clamped() {
        let mut g = GhostHistory::new();
        g.record(1, &[0.0, 0.1]);
        g.record(2, &[5.0, 5.1]);
        // one step out drifts by 5, beyond 10x the range of 0.1
        assert_eq!(g.extrapolate(3).unwrap(), vec![5.0, 5.1]);
    }

    #[test]
    fn lookahead_stops_after_one_interval() {
        let mut g = GhostHistory::new();
        g.record(1, &[0.0, 1.0]);
        g.record(2, &[1.0, 2.0]);
        assert_eq!(g.extrapolate(3).unwrap(), vec![2.0, 3.0]);
        assert_eq!(g.extrapolate(1000).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn accelerating_or_reversing_entries_are_held() {
        let mut g = GhostHistory::new();
        g.record(1, &[0.0, 0.0, 0.0, 10.0]);
        g.record(2, &[1.0, 1.0, -1.0, 12.0]);
        g.record(3, &[2.0, 3.0, 0.0, 13.0]);
        // steady, accelerating, reversing, slowing
        assert_eq!(g.extrapolate(4).unwrap(), vec![3.0, 3.0, 0.0, 14.0]);
        g.record(4, &[3.0, 4.0, 0.0, 13.5]);
        assert_eq!(g.len(), 3);
        assert_eq!(g.extrapolate(5).unwrap(), vec![4.0, 5.0, 0.0, 14.0]);
    }

    #[test]
    fn extrapolation_guard() {
        let mut g = GhostHistory::new();
        assert_eq!(g.extrapolate(1), Err(EventError::NoHistory));
        g.record(1, &[1.0]);
        g.neighbor_converged = true;
        assert_eq!(g.extrapolate(2), Err(EventError::NeighborConverged));
    }

    #[test]
    fn same_iteration_record_replaces() {
        let mut g = GhostHistory::new();
        g.record(1, &[0.0, 1.0]);
        g.record(5, &[1.0, 2.0]);
        g.record(5, &[2.0, 3.0]);
        assert_eq!(g.len(), 2);
        assert_eq!(g.latest(), Some(&[2.0, 3.0][..]));
        assert_eq!(g.extrapolate(9).unwrap(), vec![4.0, 5.0]);
    }

    #[test]
    fn trace_csv_header() {
        let rows = vec![ThresholdTraceRow {
            pe: 1,
            side: crate::grid::Side::Top,
            iter: 7,
            norm: 1.5,
            tau: 0.25,
            sent: true,
        }];
        let mut out = Vec::new();
        write_threshold_csv(&mut out, &rows).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "pe,side,iter,norm,tau,sent\n1,top,7,1.5,0.25,true\n"
        );
    }

    proptest! {
        #[test]
        fn threshold_strictly_decreases_between_events(
            tau_star in 1e-6f64..1e3,
            decay in 0.05f64..0.99,
            steps in 1usize..200,
        ) {
            let mut s = ThresholdState::new(params(1.0, decay, 0)).unwrap();
            s.tau_star = tau_star;
            s.last_sent_norm = 0.0;
            let mut prev = s.threshold();
            for k in 0..steps {
                // norm never moves, so no event can fire while tau > 0
                let t = s.threshold();
                if t == 0.0 { break; }
                prop_assert!(!s.should_send(0.0, 10 + k as u64));
                let next = s.threshold();
                prop_assert!(next < prev || next == 0.0);
                prev = next;
            }
        }

        /// For a monotone trajectory moving at least `eps` per iteration, a
        /// send happens within ceil(log(eps / tau*) / log d) + 1 iterations.
        #[test]
        fn eventual_send_bound(
            tau_star in 1e-3f64..1e3,
            decay in 0.1f64..0.99,
            eps in 1e-4f64..1.0,
            extra in proptest::collection::vec(0.0f64..2.0, 2000),
            up in any::<bool>(),
        ) {
            let mut s = ThresholdState::new(params(1.0, decay, 0)).unwrap();
            s.tau_star = tau_star;
            s.last_sent_norm = 100.0;
            let bound = ((eps / tau_star).ln() / decay.ln()).ceil().max(0.0) as usize + 1;
            let sign = if up { 1.0 } else { -1.0 };
            let mut norm = 100.0;
            let mut fired_after = None;
            for (k, x) in extra.iter().enumerate() {
                norm += sign * (eps + x * eps);
                if s.should_send(norm, 1 + k as u64) {
                    fired_after = Some(k + 1);
                    break;
                }
            }
            let fired = fired_after.expect("no event in 2000 iterations");
            prop_assert!(fired <= bound, "fired after {} > bound {}", fired, bound);
        }

        #[test]
        fn warmup_sends_every_iteration(warmup in 1u64..400, horizon in 0.0f64..1e4, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = ThresholdState::new(params(horizon, 0.9, warmup)).unwrap();
            let mut sends = 0;
            for it in 0..warmup {
                let norm = rng.random_range(0.0..10.0);
                if s.should_send(norm, it) {
                    s.on_send(norm, it);
                    sends += 1;
                }
            }
            prop_assert_eq!(sends, warmup);
        }

        #[test]
        fn zero_horizon_always_sends(seed in 0u64..200, warmup in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = ThresholdState::new(params(0.0, 0.5, warmup)).unwrap();
            for it in 0..500 {
                let norm = rng.random_range(0.0..1.0);
                prop_assert!(s.should_send(norm, it));
                s.on_send(norm, it);
            }
        }

        #[test]
        fn linear_trajectories_extrapolate_exactly(
            base in proptest::collection::vec(-10.0f64..10.0, 8),
            rate in proptest::collection::vec(-0.1f64..0.1, 8),
            t1 in 100u64..500,
            gap in 1u64..100,
            ahead_raw in 0u64..1000,
            back in proptest::option::of(1u64..100),
        ) {
            let at = |t: u64| -> Vec<f64> {
                base.iter().zip(&rate).map(|(b, r)| b + r * t as f64).collect()
            };
            let ahead = ahead_raw % (gap + 1);
            let t2 = t1 + gap;
            let mut g = GhostHistory::new();
            if let Some(back) = back {
                g.record(t1 - back, &at(t1 - back));
            }
            g.record(t1, &at(t1));
            g.record(t2, &at(t2));
            let target = t2 + ahead;
            let last = at(t2);
            let range = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - last.iter().cloned().fold(f64::INFINITY, f64::min);
            let drift = rate.iter().map(|r| r.abs()).fold(0.0, f64::max) * ahead as f64;
            prop_assume!(drift < EXTRAPOLATION_CLAMP * range);
            let got = g.extrapolate(target).unwrap();
            for (a, b) in got.iter().zip(at(target)) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{} vs {}", a, b);
            }
        }
    }
}
