use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode failed: {0}")]
    Decode(#[from] image::ImageError),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("expected a single-channel image, got {0}")]
    MultiChannel(String),

    #[error("zero-size image")]
    ZeroSize,

    #[error("pixel ({x}, {y}) is outside the {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no finite energy along the growth path")]
    NoEnergyPeak,

    #[error("mask is empty")]
    EmptyMask,

    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("malformed run-length encoding: {0}")]
    MalformedRle(String),

    #[error("mask image is not binary: found value {0}")]
    NonBinaryMask(u16),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("background annulus has {0} pixels, need at least {1}")]
    AnnulusTooSmall(usize, usize),

    #[error("increment never turns negative up to n = {0}")]
    NoSignChange(usize),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case tag for machine-readable error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Decode(_) => "decode",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::MultiChannel(_) => "multi_channel",
            Error::ZeroSize => "zero_size",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Contract(_) => "contract",
            Error::NoEnergyPeak => "no_energy_peak",
            Error::EmptyMask => "empty_mask",
            Error::DimensionMismatch(..) => "dimension_mismatch",
            Error::MalformedRle(_) => "malformed_rle",
            Error::NonBinaryMask(_) => "non_binary_mask",
            Error::InvalidScene(_) => "invalid_scene",
            Error::AnnulusTooSmall(..) => "annulus_too_small",
            Error::NoSignChange(_) => "no_sign_change",
            Error::Manifest(_) => "manifest",
            Error::Json(_) => "json",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
