//! Error type shared by all numeric modules.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor extents do not line up for the requested operation.
    Dimension {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A caller-side contract was violated (bad argument, missing key, ...).
    Contract(String),
    /// A computation produced non-finite values where finite ones are required.
    /// `layer` is the flow layer index when the failure is localized.
    Numeric { context: String, layer: Option<usize> },
    /// An unknown name or unusable setting in a generator/config argument.
    Config(String),
    /// A mathematical-domain violation (e.g. a tail-bound ε outside (0,1)).
    Domain(String),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn dimension(context: impl Into<String>, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            context: context.into(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn numeric(context: impl Into<String>, layer: Option<usize>) -> Self {
        Error::Numeric {
            context: context.into(),
            layer,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { context, lhs, rhs } => {
                write!(f, "dimension mismatch in {context}: {lhs:?} vs {rhs:?}")
            }
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Numeric { context, layer } => match layer {
                Some(i) => write!(f, "non-finite value in {context} (layer {i})"),
                None => write!(f, "non-finite value in {context}"),
            },
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
