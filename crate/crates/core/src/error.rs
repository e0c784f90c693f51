use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DefogError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("unknown output extension for {0} (expected .png or .ppm)")]
    UnknownExtension(PathBuf),

    #[error("image has zero width or height")]
    EmptyImage,

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("image {width}x{height} is smaller than the 3x3 matting window")]
    ImageTooSmall { width: usize, height: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, DefogError>;

pub(crate) fn check_dims(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left != right {
        return Err(DefogError::DimensionMismatch {
            left_w: left.0,
            left_h: left.1,
            right_w: right.0,
            right_h: right.1,
        });
    }
    Ok(())
}
