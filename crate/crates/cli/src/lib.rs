//! Configuration, orchestration and output writing for the `uav-secrecy` binary.

pub mod config;
pub mod error;
pub mod run;
