//! File formats, checkpoints, session logs, the HTTP service and the CLI
//! around `ddx-core`.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod service;
pub mod session_log;

pub use ddx_core as core;
