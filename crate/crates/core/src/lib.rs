pub mod cli;
pub mod config;
pub mod detectors;
pub mod harness;
pub mod proposal;
pub mod region;
pub mod rng;
pub mod scorer;
pub mod space;
