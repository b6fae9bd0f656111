//! The global job scheduler: task classification, the crowdsourced result
//! store and its HTTP wire protocol.

pub mod api;
pub mod client;
pub mod clock;
pub mod server;
mod store;

pub use api::*;
pub use client::HttpClient;
pub use clock::{Clock, ManualClock, SystemClock};
pub use server::{serve, spawn, ServerHandle};
pub use store::{Scheduler, SchedulerConfig, SchedulerEvent, TaskKey};
