//! Post-quantum authentication, simulated QKD key supply and a
//! discrete-event model of a quantum-secured mobile network.

pub mod aka;
pub mod crypto;
pub mod ids;
pub mod kms;
pub mod qkd;
pub mod sim;
