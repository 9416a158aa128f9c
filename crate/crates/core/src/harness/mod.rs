//! Batch experiment driver: configuration, per-seed runs, CSV output,
//! replay of external data, plot tables and the bound-dominance suite.

pub mod config;
pub mod io;
pub mod plot;
pub mod replay;
pub mod run;
pub mod validate;

use crate::Error;

/// Process exit code for an error: 2 configuration, 3 infeasible budget, 4 data.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => 3,
        Error::Data(_) | Error::Io(_) | Error::EmptyBatch => 4,
        _ => 2,
    }
}
