//! Discrete-time simulator of an energy-harvesting UAV-mounted reconfigurable
//! intelligent surface (RIS) serving mobile IoT nodes, together with the
//! actor-critic agents that learn to drive it.
//!
//! The crate is layered bottom-up:
//!
//! - [`geometry`]: positions, random-waypoint node mobility, K-means UAV targeting.
//! - [`channel`]: Rayleigh/Rician fading, log-distance path loss, imperfect CSI.
//! - [`energy`]: TS/PS/hybrid harvesting protocols, nonlinear rectifier, solar, battery.
//! - [`comms`]: precoding, incident power at the RIS, SINR and rates.
//! - [`env`]: the Markov decision process wrapping all of the above.
//! - [`rl`]: MLP substrate, replay buffer, DDPG-EH / TD3 / DDPG agents, grid search.
//! - [`harness`]: configuration, training runs, sweeps, CSV export, figure experiments.

pub mod channel;
pub mod comms;
pub mod energy;
pub mod env;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod rl;
pub mod rng;

pub use channel::{ChannelConfig, ChannelRealization, ComplexMatrix};
pub use comms::{LinkBudget, PrecoderKind, Precoding};
pub use energy::{Battery, EhAction, EhConfig, EhProtocol};
pub use env::{Env, EnvConfig, SlotReport, StepOutcome};
pub use error::{Error, Result};
pub use geometry::{Bounds, Position3, Scene};
pub use rl::agent::{Agent, AgentConfig, AgentKind};
pub use rl::replay::{ReplayBuffer, Transition};
