use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two grids (or a grid and a mask) that must share geometry do not.
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    /// Array lengths or shapes disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A parameter or value is outside its mathematical domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index ({0}, {1}, {2}) out of range")]
    IndexOutOfRange(usize, usize, usize),

    #[error("class {0} never observed")]
    UnobservedClass(usize),

    #[error("no defined voxels")]
    NoDefinedVoxels,

    /// Malformed binary or text input. `location` names the byte offset
    /// (binary formats) or line (text formats) where decoding failed.
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format_at_byte(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            location: format!("byte offset {offset}"),
            message: message.into(),
        }
    }

    pub(crate) fn format_at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    /// True for errors caused by values outside a numeric domain rather than
    /// by malformed input or I/O.
    pub fn is_numeric_domain(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::UnobservedClass(_)
                | Error::NoDefinedVoxels
                | Error::IndexOutOfRange(..)
        )
    }
}
