use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A PE whose compute delay is multiplied by `factor`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlowPe {
    pub pe: usize,
    pub factor: u64,
}

/// Integer virtual-time delays.
///
/// A sweep on PE `k` costs `compute_base * factor(k) + U[0, compute_jitter]`;
/// a polling step while locally converged costs `idle_cost`; a message
/// becomes visible `latency_base + U[0, latency_jitter]` after its put. In the
/// threaded backend one unit of virtual time is `tick_us` microseconds of
/// sleep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub compute_base: u64,
    pub compute_jitter: u64,
    pub slow: Vec<SlowPe>,
    pub idle_cost: u64,
    pub latency_base: u64,
    pub latency_jitter: u64,
    pub tick_us: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::zero_latency()
    }
}

impl DelayModel {
    /// Unit compute cost, instant delivery.
    pub fn zero_latency() -> Self {
        DelayModel {
            compute_base: 1,
            compute_jitter: 0,
            slow: Vec::new(),
            idle_cost: 1,
            latency_base: 0,
            latency_jitter: 0,
            tick_us: 0,
        }
    }

    /// Jittered compute and latency, used by the sweeps so that seeds matter.
    pub fn jittered() -> Self {
        DelayModel {
            compute_base: 4,
            compute_jitter: 2,
            slow: Vec::new(),
            idle_cost: 1,
            latency_base: 1,
            latency_jitter: 3,
            tick_us: 0,
        }
    }

    pub fn with_slow(mut self, pe: usize, factor: u64) -> Self {
        self.slow.retain(|s| s.pe != pe);
        self.slow.push(SlowPe { pe, factor });
        self
    }

    pub fn factor(&self, pe: usize) -> u64 {
        self.slow.iter().find(|s| s.pe == pe).map_or(1, |s| s.factor)
    }

    pub fn sampler(&self, seed: u64) -> DelaySampler {
        DelaySampler {
            model: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Seeded draw sequence for one [`DelayModel`].
#[derive(Clone, Debug)]
pub struct DelaySampler {
    model: DelayModel,
    rng: ChaCha8Rng,
}

impl DelaySampler {
    fn jitter(&mut self, max: u64) -> u64 {
        if max == 0 {
            0
        } else {
            self.rng.random_range(0..=max)
        }
    }

    pub fn compute(&mut self, pe: usize) -> u64 {
        let base = self.model.compute_base * self.model.factor(pe);
        base + self.jitter(self.model.compute_jitter)
    }

    pub fn idle(&mut self) -> u64 {
        self.model.idle_cost
    }

    pub fn latency(&mut self) -> u64 {
        self.model.latency_base + self.jitter(self.model.latency_jitter)
    }

    pub fn model(&self) -> &DelayModel {
        &self.model
    }
}
