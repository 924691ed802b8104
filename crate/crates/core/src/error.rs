use alloc::string::String;
use core::fmt;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A matrix failed the Hermitian / unit-trace / PSD checks.
    NotPhysical(String),
    /// An argument was outside its documented domain.
    InvalidArgument(String),
    /// A joint setting required by an estimator is absent from the table.
    MissingSetting(String),
    /// A setting was present but recorded no counts.
    ZeroCounts(String),
    /// The angle extraction phasor was too close to zero to define a phase.
    IllConditioned(String),
    /// A scan probe showed no usable contrast across the search range.
    FlatResponse { contrast: f64, floor: f64 },
    /// A linear system was singular.
    Singular(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPhysical(s) => write!(f, "state is not physical: {s}"),
            Error::InvalidArgument(s) => write!(f, "invalid argument: {s}"),
            Error::MissingSetting(s) => write!(f, "missing setting: {s}"),
            Error::ZeroCounts(s) => write!(f, "no counts recorded for {s}"),
            Error::IllConditioned(s) => write!(f, "ill-conditioned: {s}"),
            Error::FlatResponse { contrast, floor } => write!(
                f,
                "flat scan response: contrast {contrast:.3e} below noise floor {floor:.3e}"
            ),
            Error::Singular(s) => write!(f, "singular system: {s}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
