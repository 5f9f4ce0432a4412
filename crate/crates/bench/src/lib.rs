//! Shared fixtures for the criterion benchmarks.

use ehris_core::{Env, EnvConfig, EhProtocol, ReplayBuffer, Transition};
use rand::Rng;

/// Reference-sized environment (8 antennas, 16 elements, 3 nodes).
pub fn env(protocol: EhProtocol) -> Env {
    let cfg = EnvConfig { protocol, ..EnvConfig::default() };
    Env::new(cfg, 7).expect("default config is valid")
}

pub fn random_action<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Replay buffer filled with `n` transitions from random play.
pub fn filled_buffer(env: &mut Env, n: usize) -> ReplayBuffer {
    let mut rng = ehris_core::rng::stream(11, 0);
    let mut buffer = ReplayBuffer::new(n).expect("capacity >= 1");
    let mut state = env.reset(0).expect("reset");
    let mut episode = 0;
    while buffer.len() < n {
        let action = random_action(env.action_dim(), &mut rng);
        let out = env.step_raw(&action).expect("step");
        buffer.push(Transition {
            state: state.clone(),
            action,
            reward: out.reward,
            next_state: out.state.clone(),
            done: out.done,
        });
        state = out.state;
        if out.done {
            episode += 1;
            state = env.reset(episode).expect("reset");
        }
    }
    buffer
}
