//! Library surface of the CLI so that configuration parsing and the run
//! pipeline are testable without spawning the binary.

pub mod config;
pub mod output;
pub mod plot;
pub mod run;
