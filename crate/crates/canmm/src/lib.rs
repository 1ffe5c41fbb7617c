//! Scenario files, CSV/JSON output and command implementations for the
//! `canmm` binary.

pub mod commands;
pub mod output;
pub mod scenario;
