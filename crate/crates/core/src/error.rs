use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Parameters or states that fail validation.
    #[error("invalid parameters: {0}")]
    Param(String),

    /// Argument outside the domain of a special function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A series or iteration did not reach its tolerance.
    #[error("no convergence in {what} after {terms} terms (partial value {partial:e})")]
    Convergence {
        what: &'static str,
        partial: f64,
        terms: usize,
    },

    /// An oracle or routine was used outside the shape it supports.
    #[error("misuse: {0}")]
    Misuse(String),

    /// The requested parameter shape has no supported computation route.
    #[error("unsupported shape: {0}")]
    Unsupported(String),

    /// Floating point breakdown (NaN, failed factorization, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn misuse(msg: impl Into<String>) -> Self {
        Error::Misuse(msg.into())
    }

    /// Prefix the message with `ctx`; structured variants pass through.
    pub(crate) fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Param(m) => Error::Param(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Misuse(m) => Error::Misuse(format!("{ctx}: {m}")),
            Error::Unsupported(m) => Error::Unsupported(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            e @ Error::Convergence { .. } => e,
        }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Param(_) | Error::Domain(_) | Error::Misuse(_) | Error::Unsupported(_)
        )
    }
}
