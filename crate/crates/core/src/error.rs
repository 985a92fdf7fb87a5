use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("load error{}: {msg}", layer_suffix(.layer))]
    Load { layer: Option<usize>, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn layer_suffix(layer: &Option<usize>) -> String {
    match layer {
        Some(i) => format!(" at layer {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn load(layer: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Load {
            layer,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
