//! A sealer and any number of verifiers sharing one in-process bus.
//!
//! Time is either virtual, advanced by the caller from one event to the next,
//! or real, with every node running its own thread. Block delivery is lossless
//! and per-link FIFO.

mod bus;
mod clock;
mod network;
mod node;

pub use bus::{Delivery, Latency};
pub use clock::ClockMode;
pub use network::{Gateway, NetError, Running, SimNetwork};
pub use node::{NodeHandle, NodeId, NodeRole, Role};
