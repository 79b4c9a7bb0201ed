//! In-process computation graph: nodes, topics, and services.

mod graph;
mod name;

pub use graph::{Bus, BusError, BusMessage, NodeRecord, ServiceHandler, SubscriptionId};
pub use name::{InvalidName, TopicName};

/// Default timeout applied by callers that do not pick one.
pub const DEFAULT_SERVICE_TIMEOUT_MS: u64 = 5_000;
