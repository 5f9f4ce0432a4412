//! Learning substrate and agents.

pub mod agent;
pub mod mlp;
pub mod replay;
pub mod search;
