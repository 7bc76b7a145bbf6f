//! Command implementations behind the `boundfix` binary.
//!
//! A run reads reference and hypothesis label files plus utterance
//! structures, writes error records, trains a correction tree, applies it,
//! and reports before/after metrics. `simulate` produces a synthetic corpus
//! laid out exactly as these commands expect.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{cmd_compare, cmd_correct, cmd_evaluate, cmd_simulate, cmd_train, Failure, Outcome, Workspace};
pub use config::{Overrides, RunConfig};
