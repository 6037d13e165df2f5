//! Command implementations behind the `toolsub` binary. Each command writes
//! its human-readable output to a caller-supplied writer.

pub mod cli;
pub mod config;
pub mod extract;
pub mod features;
pub mod gendata;
pub mod rank;
pub mod selfcheck;
pub mod train;

pub use cli::{run, Cli};
pub use config::RunConfig;
