//! Operation-sequence runner with a UI-facing client node and an
//! action-style executor node.

mod client;
pub mod definition;
pub mod mode;
mod server;

pub use client::*;
pub use definition::{DefinitionError, Operation, ProcessDefinition, Step};
pub use mode::{transition, Command, Mode};
pub use server::*;
