//! O-RAN-style control plane for the RIS emulator: the bit-exact wire
//! protocol, the near-real-time controller with its xApps, and the E2 node
//! agent embedding the channel simulator.

pub mod agent;
pub mod events;
pub mod proto;
pub mod ric;
