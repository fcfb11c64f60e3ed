//! Headless runner, sweeps and the live viewer service.

pub mod cli;
pub mod protocol;
pub mod server;
