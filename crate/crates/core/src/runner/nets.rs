//! [`PeNet`] over virtual-time windows and over shared-memory windows.

use crate::comm::{
    ChannelId, CommError, CommEvent, Delivery, DelaySampler, HaloMessage, SharedWindow, Step, VirtualNet,
    VirtualWindow, VirtualWorker,
};
use crate::convergence::ConvReport;
use crate::grid::Side;

use super::worker::{PeNet, PeWorker, Topology};
use super::RunError;

pub struct VirtualPeNet {
    halo: VirtualWindow<HaloMessage>,
    reports: VirtualWindow<Option<ConvReport>>,
    global: VirtualWindow<bool>,
    delays: DelaySampler,
    now: u64,
}

impl VirtualPeNet {
    pub fn new(topo: &Topology, ny: usize, delays: DelaySampler, log: bool) -> Self {
        let n = topo.n_pes;
        let mut halo = VirtualWindow::new("halo", topo.n_channels(), HaloMessage::initial(Side::Bottom, ny));
        for c in 0..topo.n_channels() {
            if topo.is_registered(ChannelId(c)) {
                halo.register(ChannelId(c));
            }
        }
        let mut reports = VirtualWindow::new("report", n, None).all_registered();
        let mut global = VirtualWindow::new("global", n, false).all_registered();
        if log {
            halo = halo.with_log();
            reports = reports.with_log();
            global = global.with_log();
        }
        VirtualPeNet {
            halo,
            reports,
            global,
            delays,
            now: 0,
        }
    }

    /// All logged window events in time order.
    pub fn take_log(&mut self) -> Vec<CommEvent> {
        let mut all = self.halo.take_log();
        all.extend(self.reports.take_log());
        all.extend(self.global.take_log());
        all.sort_by_key(|e| e.t);
        all
    }
}

impl VirtualNet for VirtualPeNet {
    fn delays(&mut self) -> &mut DelaySampler {
        &mut self.delays
    }
}

impl PeNet for VirtualPeNet {
    fn put_halo(&mut self, ch: ChannelId, msg: HaloMessage) -> Result<u64, CommError> {
        let lat = self.delays.latency();
        self.halo.put(ch, msg, self.now, lat)
    }

    fn read_halo(&mut self, ch: ChannelId) -> Result<Delivery<HaloMessage>, CommError> {
        self.halo.read_fresh(ch, self.now)
    }

    fn put_report(&mut self, report: ConvReport) -> Result<(), CommError> {
        let lat = self.delays.latency();
        let pe = report.pe;
        self.reports.put(ChannelId(pe), Some(report), self.now, lat).map(|_| ())
    }

    fn read_report(&mut self, pe: usize) -> Result<Delivery<Option<ConvReport>>, CommError> {
        self.reports.read_fresh(ChannelId(pe), self.now)
    }

    fn put_global(&mut self, pe: usize) -> Result<(), CommError> {
        let lat = self.delays.latency();
        self.global.put(ChannelId(pe), true, self.now, lat).map(|_| ())
    }

    fn read_global(&mut self, pe: usize) -> Result<bool, CommError> {
        Ok(self.global.read_fresh(ChannelId(pe), self.now)?.message)
    }

    fn now(&self) -> Option<u64> {
        Some(self.now)
    }
}

impl VirtualWorker<VirtualPeNet> for PeWorker {
    type Error = RunError;

    fn busy(&self) -> bool {
        PeWorker::busy(self)
    }

    fn step(&mut self, now: u64, net: &mut VirtualPeNet) -> Result<Step, RunError> {
        net.now = now;
        PeWorker::step(self, net)
    }
}

pub struct SharedNet {
    pub halo: SharedWindow<HaloMessage>,
    reports: SharedWindow<Option<ConvReport>>,
    global: SharedWindow<bool>,
}

impl SharedNet {
    pub fn new(topo: &Topology, ny: usize) -> Self {
        let t = *topo;
        SharedNet {
            halo: SharedWindow::new(
                "halo",
                topo.n_channels(),
                HaloMessage::initial(Side::Bottom, ny),
                move |c| t.is_registered(c),
            ),
            reports: SharedWindow::new("report", topo.n_pes, None, |_| true),
            global: SharedWindow::new("global", topo.n_pes, false, |_| true),
        }
    }
}

/// One thread's view of a [`SharedNet`].
pub struct SharedHandle<'a>(pub &'a SharedNet);

impl PeNet for SharedHandle<'_> {
    fn put_halo(&mut self, ch: ChannelId, msg: HaloMessage) -> Result<u64, CommError> {
        self.0.halo.put(ch, msg)
    }

    fn read_halo(&mut self, ch: ChannelId) -> Result<Delivery<HaloMessage>, CommError> {
        self.0.halo.read_fresh(ch)
    }

    fn put_report(&mut self, report: ConvReport) -> Result<(), CommError> {
        let pe = report.pe;
        self.0.reports.put(ChannelId(pe), Some(report)).map(|_| ())
    }

    fn read_report(&mut self, pe: usize) -> Result<Delivery<Option<ConvReport>>, CommError> {
        self.0.reports.read_fresh(ChannelId(pe))
    }

    fn put_global(&mut self, pe: usize) -> Result<(), CommError> {
        self.0.global.put(ChannelId(pe), true).map(|_| ())
    }

    fn read_global(&mut self, pe: usize) -> Result<bool, CommError> {
        Ok(self.0.global.read_fresh(ChannelId(pe))?.message)
    }

    fn now(&self) -> Option<u64> {
        None
    }
}
