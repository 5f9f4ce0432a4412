//! Configuration, training runs, persistence, sweeps and the figure experiments.

pub mod config;
pub mod experiments;
pub mod record;
pub mod run;
