//! Experiment orchestration behind the `fairlens` binary.

mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_audit, cmd_reproduce_separation, cmd_table, SeparationReproduction, TableCell, TableReport,
    TableRow, DEFAULT_TABLE_PAIRS, MIN_REPRODUCTION_N, QUADRATURE_TOL, TABLE_CSV_HEADER,
};
pub use config::{OutputFormat, RunConfig, MIN_RUN_N};
pub use report::{emit_report, AuditReport, AxiomReport, CSV_HEADER};

use crate::error::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DISAGREEMENT: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// Process exit code for a failed command. Everything that is not an I/O
/// failure stems from the inputs and counts as a configuration error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::File { .. } | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}
