//! Command layer shared by the `midway` binary and its local JSON service.
//!
//! Every command is a typed request run against loaded inputs and produces a
//! [`Report`]; the CLI writes it to disk and the service returns the same
//! bytes, so the two surfaces cannot drift.

pub mod manifest;
pub mod run;
pub mod service;

pub use run::{Dataset, InputFile, Report, RunError};
