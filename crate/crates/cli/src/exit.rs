use std::fmt;

use ssar_core::Error;

pub const SUCCESS: u8 = 0;
pub const HARD_LEMMA_FAILURE: u8 = 2;
pub const IO_FAILURE: u8 = 3;
pub const INVALID_CONFIG: u8 = 4;
/// Numerical trouble that is neither a bad input nor a lemma violation.
pub const RUNTIME_FAILURE: u8 = 1;

#[derive(Debug)]
pub enum Failure {
    HardLemma(String),
    Io(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::HardLemma(_) => HARD_LEMMA_FAILURE,
            Failure::Io(_) => IO_FAILURE,
            Failure::Config(_) => INVALID_CONFIG,
            Failure::Runtime(_) => RUNTIME_FAILURE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::HardLemma(m) => write!(f, "hard check failed: {m}"),
            Failure::Io(m) => write!(f, "{m}"),
            Failure::Config(m) => write!(f, "invalid configuration: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for Failure {}

pub fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Parse { .. } => Failure::Io(msg),
            Error::InvalidInput(_)
            | Error::DimensionMismatch(_)
            | Error::ResourceLimit(_)
            | Error::InsufficientSample { .. } => Failure::Config(msg),
            Error::LemmaViolation { .. }
            | Error::BarrierViolation { .. }
            | Error::IterationCapExceeded { .. } => Failure::HardLemma(msg),
            _ => Failure::Runtime(msg),
        }
    }
}
