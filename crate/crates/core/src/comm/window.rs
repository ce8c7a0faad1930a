//! Latest-value one-sided windows.
//!
//! Every channel is a single slot written by one sender and read by one
//! receiver. A put never waits for the receiver and may overwrite a message
//! the receiver has not read yet. Reads always return a whole message.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::log::{CommEvent, CommOp};
use super::CommError;

/// Index of a registered channel inside a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId(pub usize);

/// Result of [`VirtualWindow::read_fresh`] and [`SharedWindow::read_fresh`].
#[derive(Clone, Debug, PartialEq)]
pub struct Delivery<T> {
    pub message: T,
    /// A write became visible since the previous `read_fresh` on the channel.
    pub fresh: bool,
    /// Sequence number of `message`; 0 for the initial value.
    pub seq: u64,
}

#[derive(Clone, Debug)]
struct InFlight<T> {
    visible_at: u64,
    seq: u64,
    message: T,
}

#[derive(Clone, Debug)]
struct Slot<T> {
    registered: bool,
    current: T,
    current_seq: u64,
    read_seq: u64,
    next_seq: u64,
    in_flight: Vec<InFlight<T>>,
}

impl<T: Clone> Slot<T> {
    fn new(initial: T, registered: bool) -> Self {
        Slot {
            registered,
            current: initial,
            current_seq: 0,
            read_seq: 0,
            next_seq: 0,
            in_flight: Vec::new(),
        }
    }

    /// Promotes the newest in-flight message whose latency has elapsed.
    /// Older messages that land later are dropped, so visibility follows
    /// put order.
    fn settle(&mut self, now: u64) {
        let mut best: Option<usize> = None;
        for (k, m) in self.in_flight.iter().enumerate() {
            if m.visible_at <= now && best.is_none_or(|b| self.in_flight[b].seq < m.seq) {
                best = Some(k);
            }
        }
        if let Some(k) = best {
            let landed = self.in_flight.swap_remove(k);
            if landed.seq > self.current_seq {
                self.current_seq = landed.seq;
                self.current = landed.message;
            }
        }
        let floor = self.current_seq;
        self.in_flight.retain(|m| m.seq > floor);
    }
}

/// Window for the single-threaded virtual-time backend.
///
/// A put at time `t` with latency `l` becomes visible to reads at any time
/// `>= t + l`.
#[derive(Clone, Debug)]
pub struct VirtualWindow<T> {
    slots: Vec<Slot<T>>,
    log: Option<Vec<CommEvent>>,
    name: &'static str,
}

impl<T: Clone> VirtualWindow<T> {
    /// Creates `n` unregistered channels that read as `initial`.
    pub fn new(name: &'static str, n: usize, initial: T) -> Self {
        VirtualWindow {
            slots: (0..n).map(|_| Slot::new(initial.clone(), false)).collect(),
            log: None,
            name,
        }
    }

    pub fn register(&mut self, ch: ChannelId) {
        self.slots[ch.0].registered = true;
    }

    /// Registers every channel.
    pub fn all_registered(mut self) -> Self {
        self.slots.iter_mut().for_each(|s| s.registered = true);
        self
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn take_log(&mut self) -> Vec<CommEvent> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn slot(&mut self, ch: ChannelId) -> Result<&mut Slot<T>, CommError> {
        match self.slots.get_mut(ch.0) {
            Some(s) if s.registered => Ok(s),
            _ => Err(CommError::UnregisteredChannel {
                window: self.name,
                channel: ch.0,
            }),
        }
    }

    /// Writes `message` into the receiver's slot; returns its sequence number.
    pub fn put(&mut self, ch: ChannelId, message: T, now: u64, latency: u64) -> Result<u64, CommError> {
        let slot = self.slot(ch)?;
        slot.next_seq += 1;
        let seq = slot.next_seq;
        slot.in_flight.push(InFlight {
            visible_at: now + latency,
            seq,
            message,
        });
        if let Some(log) = &mut self.log {
            log.push(CommEvent {
                t: now,
                window: self.name,
                op: CommOp::Put,
                channel: ch.0,
                seq,
                fresh: None,
                visible_at: Some(now + latency),
            });
        }
        Ok(seq)
    }

    /// Latest visible message; clears freshness.
    pub fn read_fresh(&mut self, ch: ChannelId, now: u64) -> Result<Delivery<T>, CommError> {
        let slot = self.slot(ch)?;
        slot.settle(now);
        let fresh = slot.current_seq > slot.read_seq;
        slot.read_seq = slot.current_seq;
        let delivery = Delivery {
            message: slot.current.clone(),
            fresh,
            seq: slot.current_seq,
        };
        if let Some(log) = &mut self.log {
            log.push(CommEvent {
                t: now,
                window: self.name,
                op: CommOp::Read,
                channel: ch.0,
                seq: delivery.seq,
                fresh: Some(fresh),
                visible_at: None,
            });
        }
        Ok(delivery)
    }

    /// Number of puts issued on the channel so far.
    pub fn puts(&self, ch: ChannelId) -> u64 {
        self.slots.get(ch.0).map_or(0, |s| s.next_seq)
    }
}

#[derive(Debug)]
struct SharedSlot<T> {
    registered: bool,
    current: T,
    version: u64,
    read_version: u64,
}

/// Window shared between threads. Each slot sits behind its own lock, so a
/// put or read observes the slot atomically; the version counter drives
/// freshness.
#[derive(Debug)]
pub struct SharedWindow<T> {
    slots: Vec<Mutex<SharedSlot<T>>>,
    name: &'static str,
}

impl<T: Clone> SharedWindow<T> {
    pub fn new(name: &'static str, n: usize, initial: T, registered: impl Fn(ChannelId) -> bool) -> Self {
        SharedWindow {
            slots: (0..n)
                .map(|k| {
                    Mutex::new(SharedSlot {
                        registered: registered(ChannelId(k)),
                        current: initial.clone(),
                        version: 0,
                        read_version: 0,
                    })
                })
                .collect(),
            name,
        }
    }

    fn lock(&self, ch: ChannelId) -> Result<std::sync::MutexGuard<'_, SharedSlot<T>>, CommError> {
        let err = CommError::UnregisteredChannel {
            window: self.name,
            channel: ch.0,
        };
        let slot = self.slots.get(ch.0).ok_or_else(|| err.clone())?;
        let guard = slot.lock().unwrap_or_else(|p| p.into_inner());
        if guard.registered {
            Ok(guard)
        } else {
            Err(err)
        }
    }

    pub fn put(&self, ch: ChannelId, message: T) -> Result<u64, CommError> {
        let mut slot = self.lock(ch)?;
        slot.version += 1;
        slot.current = message;
        Ok(slot.version)
    }

    pub fn read_fresh(&self, ch: ChannelId) -> Result<Delivery<T>, CommError> {
        let mut slot = self.lock(ch)?;
        let fresh = slot.version > slot.read_version;
        slot.read_version = slot.version;
        Ok(Delivery {
            message: slot.current.clone(),
            fresh,
            seq: slot.version,
        })
    }

    pub fn puts(&self, ch: ChannelId) -> u64 {
        self.lock(ch).map_or(0, |s| s.version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn window() -> VirtualWindow<u32> {
        VirtualWindow::new("test", 2, 0).all_registered()
    }

    #[test]
    fn later_put_overwrites_earlier() {
        let mut w = window();
        w.put(ChannelId(0), 1, 0, 0).unwrap();
        w.put(ChannelId(0), 2, 0, 0).unwrap();
        let d = w.read_fresh(ChannelId(0), 0).unwrap();
        assert_eq!((d.message, d.fresh, d.seq), (2, true, 2));
    }

    #[test]
    fn read_without_put_returns_initial() {
        let mut w = window();
        for t in 0..3 {
            let d = w.read_fresh(ChannelId(1), t).unwrap();
            assert_eq!((d.message, d.fresh, d.seq), (0, false, 0));
        }
    }

    #[test]
    fn freshness_clears_on_read() {
        let mut w = window();
        w.put(ChannelId(0), 7, 3, 0).unwrap();
        assert!(w.read_fresh(ChannelId(0), 3).unwrap().fresh);
        let second = w.read_fresh(ChannelId(0), 3).unwrap();
        assert_eq!((second.message, second.fresh), (7, false));
    }

    #[test]
    fn latency_delays_visibility() {
        let mut w = window();
        w.put(ChannelId(0), 9, 10, 5).unwrap();
        let early = w.read_fresh(ChannelId(0), 14).unwrap();
        assert_eq!((early.message, early.fresh), (0, false));
        let on_time = w.read_fresh(ChannelId(0), 15).unwrap();
        assert_eq!((on_time.message, on_time.fresh), (9, true));
    }

    #[test]
    fn late_landing_older_message_is_dropped() {
        let mut w = window();
        w.put(ChannelId(0), 1, 0, 10).unwrap();
        w.put(ChannelId(0), 2, 1, 1).unwrap();
        assert_eq!(w.read_fresh(ChannelId(0), 2).unwrap().message, 2);
        let d = w.read_fresh(ChannelId(0), 20).unwrap();
        assert_eq!((d.message, d.fresh), (2, false));
    }

    #[test]
    fn unregistered_channel_is_an_error() {
        let mut w: VirtualWindow<u32> = VirtualWindow::new("halo", 3, 0);
        w.register(ChannelId(1));
        assert!(w.put(ChannelId(1), 1, 0, 0).is_ok());
        assert_eq!(
            w.put(ChannelId(0), 1, 0, 0),
            Err(CommError::UnregisteredChannel {
                window: "halo",
                channel: 0
            })
        );
        assert!(w.read_fresh(ChannelId(5), 0).is_err());
        let s: SharedWindow<u32> = SharedWindow::new("halo", 2, 0, |c| c.0 == 0);
        assert!(s.put(ChannelId(1), 3).is_err());
    }

    #[test]
    fn log_records_puts_and_reads() {
        let mut w = window().with_log();
        w.put(ChannelId(1), 4, 2, 3).unwrap();
        w.read_fresh(ChannelId(1), 4).unwrap();
        w.read_fresh(ChannelId(1), 5).unwrap();
        let log = w.take_log();
        assert_eq!(log.len(), 3);
        assert_eq!(log[0].visible_at, Some(5));
        assert_eq!(log[1].fresh, Some(false));
        assert_eq!((log[2].fresh, log[2].seq), (Some(true), 1));
    }

    #[test]
    fn shared_window_never_tears() {
        let w = Arc::new(SharedWindow::new("halo", 1, vec![0u64; 64], |_| true));
        let writer = {
            let w = Arc::clone(&w);
            std::thread::spawn(move || {
                for k in 1..=2000u64 {
                    w.put(ChannelId(0), vec![k; 64]).unwrap();
                }
            })
        };
        let mut last = 0;
        let mut last_seq = 0;
        for _ in 0..2000 {
            let d = w.read_fresh(ChannelId(0)).unwrap();
            assert!(d.message.iter().all(|&v| v == d.message[0]), "torn read");
            assert!(d.message[0] >= last && d.seq >= last_seq);
            last = d.message[0];
            last_seq = d.seq;
        }
        writer.join().unwrap();
        let d = w.read_fresh(ChannelId(0)).unwrap();
        assert_eq!(d.message[0], 2000);
        // Visible on the first read after the write completed.
        w.put(ChannelId(0), vec![1; 64]).unwrap();
        assert!(w.read_fresh(ChannelId(0)).unwrap().fresh);
    }

    #[derive(Clone, Debug)]
    enum Op {
        Put { latency: u64 },
        Read,
        Tick(u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u64..6).prop_map(|latency| Op::Put { latency }),
            Just(Op::Read),
            (1u64..4).prop_map(Op::Tick),
        ]
    }

    proptest! {
        /// Replays the operation log against a brute-force model: the message
        /// visible at time `t` is the highest-numbered put whose arrival time
        /// has passed, and a read is fresh iff that number grew since the last
        /// read.
        #[test]
        fn freshness_matches_event_log_oracle(ops in proptest::collection::vec(op(), 1..80)) {
            let mut w = window().with_log();
            let mut now = 0;
            let mut payload = 0u32;
            for o in &ops {
                match o {
                    Op::Put { latency } => {
                        payload += 1;
                        w.put(ChannelId(0), payload, now, *latency).unwrap();
                    }
                    Op::Read => {
                        w.read_fresh(ChannelId(0), now).unwrap();
                    }
                    Op::Tick(d) => now += d,
                }
            }
            let log = w.take_log();
            let mut arrivals: Vec<(u64, u64)> = Vec::new();
            let mut last_read = 0;
            for e in &log {
                match e.op {
                    CommOp::Put => arrivals.push((e.seq, e.visible_at.unwrap())),
                    CommOp::Read => {
                        let visible = arrivals
                            .iter()
                            .filter(|(_, at)| *at <= e.t)
                            .map(|(s, _)| *s)
                            .max()
                            .unwrap_or(0)
                            .max(last_read);
                        prop_assert_eq!(e.seq, visible);
                        prop_assert_eq!(e.fresh, Some(visible > last_read));
                        last_read = visible;
                    }
                }
            }
        }
    }
}
