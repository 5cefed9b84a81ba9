//! Batch front-end for `torsionlab-core`: JSON run configs, a rayon worker
//! pool, and JSON/CSV reports whose bytes do not depend on the thread count.

pub mod commands;
pub mod config;
pub mod error;
pub mod pool;
pub mod report;

pub use commands::Context;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use pool::{resolve_threads, Pool};
