use thiserror::Error;

/// Failures raised by the numerical layers (everything past config parsing).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("duty ratio {0} outside (0, 1]")]
    InvalidDuty(f64),
    #[error("negative load current {0} A")]
    NegativeLoad(f64),
    #[error("source voltage must be positive, got {0} V")]
    InvalidSource(f64),
    #[error("operating-point solver failed to converge: {0}")]
    NoConvergence(String),
    #[error("target output {target} V outside the reachable range (0, {max}) V")]
    TargetOutOfRange { target: f64, max: f64 },
    #[error("target requires duty ratio {0} > 1")]
    DutyOutOfRange(f64),
    #[error("finite-difference step underflows variable `{0}`")]
    StepTooSmall(&'static str),
    #[error("finite-difference step ratio {0} outside (0, 1e-3]")]
    InvalidStep(f64),
    #[error("operating point is undamped (R_P = {0} >= 0)")]
    UndampedOperatingPoint(f64),
    #[error("poles are not well separated (Q_p = {0} >= 0.5)")]
    PolesNotSeparated(f64),
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("frequency grid must be positive and strictly increasing")]
    InvalidGrid,
    #[error("no 0 dB crossover in the search range")]
    NoCrossover,
    #[error("continuous conduction detected in half cycle {cycle}")]
    CcmDetected { cycle: usize },
    #[error("non-finite state at t = {0} s")]
    NonFiniteState(f64),
    #[error("cycle {0} is not fully contained in the trace")]
    OutOfRange(usize),
    #[error("trace never settles")]
    NotSettled,
    #[error("state diverged at t = {0} s")]
    Instability(f64),
    #[error("reference {v_ref} V not below the maximum output {max} V at t = {t} s")]
    InvalidReference { v_ref: f64, max: f64, t: f64 },
    #[error("invalid simulation setup: {0}")]
    InvalidSetup(String),
}

impl Error {
    /// Short variant name, used by the CLI when reporting failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidDuty(_) => "InvalidDuty",
            Error::NegativeLoad(_) => "NegativeLoad",
            Error::InvalidSource(_) => "InvalidSource",
            Error::NoConvergence(_) => "NoConvergence",
            Error::TargetOutOfRange { .. } => "TargetOutOfRange",
            Error::DutyOutOfRange(_) => "DutyOutOfRange",
            Error::StepTooSmall(_) => "StepTooSmall",
            Error::InvalidStep(_) => "InvalidStep",
            Error::UndampedOperatingPoint(_) => "UndampedOperatingPoint",
            Error::PolesNotSeparated(_) => "PolesNotSeparated",
            Error::EmptyGrid => "EmptyGrid",
            Error::InvalidGrid => "InvalidGrid",
            Error::NoCrossover => "NoCrossover",
            Error::CcmDetected { .. } => "CcmDetected",
            Error::NonFiniteState(_) => "NonFiniteState",
            Error::OutOfRange(_) => "OutOfRange",
            Error::NotSettled => "NotSettled",
            Error::Instability(_) => "Instability",
            Error::InvalidReference { .. } => "InvalidReference",
            Error::InvalidSetup(_) => "InvalidSetup",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
