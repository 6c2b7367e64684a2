use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is out of range: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("quadrature did not converge: achieved relative error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("tree has no cut clocks assigned")]
    ClocksMissing,

    #[error("conditioning failed after {attempts} attempts ({accepted} accepted, acceptance rate {rate:.3e})")]
    Conditioning {
        attempts: u64,
        accepted: u64,
        rate: f64,
    },

    #[error("functional rejected: {0}")]
    UnboundedFunctional(&'static str),

    #[error("measure file, line {line}: {msg}")]
    MeasureFormat { line: usize, msg: String },

    #[error("mechanism is not admissible: {0}")]
    Inadmissible(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::Domain {
        name,
        value,
        reason,
    }
}

/// Rejects NaN and values failing `ok`.
pub(crate) fn ensure(
    name: &'static str,
    value: f64,
    ok: bool,
    reason: &'static str,
) -> Result<f64> {
    if ok && !value.is_nan() {
        Ok(value)
    } else {
        Err(domain(name, value, reason))
    }
}
