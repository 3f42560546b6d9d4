//! Instance formats and sweep serialization.

mod csv;
mod json;
mod tntp;

use thiserror::Error;

use crate::network::{Instance, Violation};

pub use self::csv::{read_sweep_csv, write_sweep_csv, CSV_HEADER};
pub use self::json::{ArcEntry, InstanceDocument, OdEntry, SCHEMA_VERSION};
pub use self::tntp::{parse_tntp, parse_tntp_network, parse_tntp_trips, TntpArc};

/// Length of road occupied by one vehicle, in metres.
pub const VEHICLE_SPACING_M: f64 = 7.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown node name {0:?}")]
    UnknownNode(String),
    #[error("duplicate node name {0:?}")]
    DuplicateNode(String),
    #[error("instance failed validation: {}", list(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("no sweep rows to write")]
    EmptyRows,
    #[error("i/o error: {0}")]
    Io(String),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        FormatError::Io(e.to_string())
    }
}

/// Source text for [`parse_instance`].
#[derive(Debug, Clone, Copy)]
pub enum InstanceText<'a> {
    Json(&'a str),
    Tntp { network: &'a str, trips: &'a str },
}

/// A parsed and validated instance plus non-fatal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub instance: Instance,
    pub warnings: Vec<String>,
}

/// Parses and validates an instance. Validation failures are reported
/// together as [`FormatError::Invalid`].
pub fn parse_instance(text: InstanceText<'_>) -> Result<Parsed, FormatError> {
    let parsed = match text {
        InstanceText::Json(s) => Parsed {
            instance: InstanceDocument::parse(s)?.to_instance()?,
            warnings: Vec::new(),
        },
        InstanceText::Tntp { network, trips } => parse_tntp(network, trips)?,
    };
    let violations = parsed.instance.validate();
    if !violations.is_empty() {
        return Err(FormatError::Invalid(violations));
    }
    Ok(parsed)
}

/// Capacity of a road segment: `length * lanes / 7.5`.
pub fn derive_capacity(length_m: f64, lanes: u32) -> Result<f64, FormatError> {
    if !(length_m > 0.0 && length_m.is_finite()) {
        return Err(FormatError::BadParameter(format!("length {length_m} must be > 0")));
    }
    if lanes == 0 {
        return Err(FormatError::BadParameter("lanes must be >= 1".into()));
    }
    Ok(length_m * f64::from(lanes) / VEHICLE_SPACING_M)
}

/// Free-flow travel time `length / speed_limit`, in the units of the inputs.
pub fn free_flow_time(length: f64, speed_limit: f64) -> Result<f64, FormatError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(FormatError::BadParameter(format!("length {length} must be > 0")));
    }
    if !(speed_limit > 0.0 && speed_limit.is_finite()) {
        return Err(FormatError::BadParameter(format!(
            "speed limit {speed_limit} must be > 0"
        )));
    }
    Ok(length / speed_limit)
}
