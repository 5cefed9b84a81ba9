use core::fmt;

/// Failure modes of the numerical core. Every variant carries enough context
/// to name the offending object without needing a backtrace.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    Domain { context: &'static str, detail: alloc::string::String },
    /// Dimension or shape mismatch.
    Shape { context: &'static str },
    /// Singular matrix where an invertible one was required.
    Singular { context: &'static str },
    /// An iterative routine failed to converge.
    NoConvergence { context: &'static str },
    /// A requested computation would exceed the configured resource limit.
    Resource { context: &'static str, detail: alloc::string::String },
    /// A numerical self-consistency check failed.
    Consistency { context: &'static str, detail: alloc::string::String },
}

impl Error {
    pub fn domain(context: &'static str, detail: impl Into<alloc::string::String>) -> Self {
        Error::Domain { context, detail: detail.into() }
    }

    pub fn resource(context: &'static str, detail: impl Into<alloc::string::String>) -> Self {
        Error::Resource { context, detail: detail.into() }
    }

    pub fn consistency(context: &'static str, detail: impl Into<alloc::string::String>) -> Self {
        Error::Consistency { context, detail: detail.into() }
    }

    /// True for failures of numerical self-consistency, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NoConvergence { .. } | Error::Consistency { .. } | Error::Singular { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { context, detail } => write!(f, "{context}: {detail}"),
            Error::Shape { context } => write!(f, "shape mismatch: {context}"),
            Error::Singular { context } => write!(f, "singular matrix: {context}"),
            Error::NoConvergence { context } => write!(f, "no convergence: {context}"),
            Error::Resource { context, detail } => write!(f, "resource limit in {context}: {detail}"),
            Error::Consistency { context, detail } => write!(f, "consistency failure in {context}: {detail}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
