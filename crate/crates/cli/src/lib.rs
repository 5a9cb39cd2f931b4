//! Experiment harness: single runs, grid sweeps, gradient certification,
//! parameter/MAC reports and timing benchmarks over `slimrnn-core`.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod gradcheck;
pub mod params;
pub mod sweep;
