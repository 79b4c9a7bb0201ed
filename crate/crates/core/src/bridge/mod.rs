//! WebSocket bridge between protocol clients and the bus.

pub mod protocol;
mod server;
mod session;
pub mod throttle;

pub use protocol::{BridgeOp, Level, Op, ProtocolError, PROTOCOL_VERSION};
pub use server::BridgeServer;
pub use session::{Bridge, BridgeOptions, LocalClient, Outbound, Session};
pub use throttle::{GateDecision, ThrottleGate};

pub const DEFAULT_PORT: u16 = 9090;
