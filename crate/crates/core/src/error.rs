use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A transform was asked for its value on the real support itself.
    #[error("boundary evaluation at real point {0} on the support; sample at an offset +i*eps instead")]
    Boundary(f64),

    /// Leaf refinement of a self-similar piece would need more levels than allowed.
    #[error("refinement depth {required} required but the configured maximum is {max}")]
    Precision { required: u32, max: u32 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("incompatible tail: {0}")]
    Tail(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn with_context(self, context: &str) -> Self {
        Error::Context {
            context: context.to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, past any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_))
    }
}
