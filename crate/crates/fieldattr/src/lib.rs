//! Files, configuration and orchestration around `fieldattr-core`.
//!
//! The `fieldattr` binary wraps [`protocol::run_protocol`]; see the README
//! for the configuration schema and the report layout.

pub mod config;
pub mod error;
pub mod io;
pub mod protocol;
pub mod report;
pub mod synth;

pub use config::{ProtocolConfig, Stage};
pub use error::{AppError, Result};
pub use protocol::{run_protocol, run_with, Artifacts, Observables};
pub use report::{emit, ProtocolReport, Table, Value};
