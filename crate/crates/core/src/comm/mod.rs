//! One-sided communication substrate: latest-value windows, the delay model
//! and a deterministic virtual-time scheduler.

mod delay;
mod log;
mod message;
mod scheduler;
mod window;

use thiserror::Error;

pub use delay::{DelayModel, DelaySampler, SlowPe};
pub use log::{write_jsonl, CommEvent, CommOp};
pub use message::{HaloKind, HaloMessage};
pub use scheduler::{run_virtual, ScheduleOutcome, Step, VirtualNet, VirtualWorker};
pub use window::{ChannelId, Delivery, SharedWindow, VirtualWindow};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CommError {
    #[error("channel {channel} is not registered in the {window} window")]
    UnregisteredChannel { window: &'static str, channel: usize },
    #[error("virtual run needs at least one worker")]
    NoWorkers,
}
