//! Command-line front end and HTTP service for the modalbank library.

pub mod cli;
pub mod commands;
pub mod config;
pub mod server;

use modalbank::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_numeric() => EXIT_NUMERIC,
        Error::InvalidArgument(_) | Error::OutOfDomain { .. } | Error::Format(_) | Error::Json(_) | Error::Wav(_) => EXIT_INVALID,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_INVALID,
        _ => EXIT_FAILURE,
    }
}

/// Stable snake_case name of an error variant.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::DegenerateMesh { .. } => "degenerate_mesh",
        Error::IllConditioned(_) => "ill_conditioned",
        Error::Solver { .. } => "solver",
        Error::OutOfDomain { .. } => "out_of_domain",
        Error::Numeric { .. } => "numeric",
        Error::Overflow { .. } => "overflow",
        Error::Diverged { .. } => "diverged",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Wav(_) => "wav",
    }
}

/// The structured error line written to stderr.
pub fn error_json(e: &Error) -> serde_json::Value {
    serde_json::json!({ "error": { "kind": error_kind(e), "message": e.to_string(), "exit_code": exit_code(e) } })
}
