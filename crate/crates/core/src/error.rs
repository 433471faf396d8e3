use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("non-finite normalized coordinate {0:?}")]
    NonFiniteCoordinate([f64; 3]),
    #[error("grid resolution must be at least 2 per axis, got {0:?}")]
    InvalidResolution([usize; 3]),
    #[error("unknown scene kind `{0}`")]
    UnknownSceneKind(String),
    #[error("training needs at least one image")]
    EmptyImageSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("pixel ({px}, {py}) outside {width}x{height} image")]
    PixelOutOfRange {
        px: u32,
        py: u32,
        width: u32,
        height: u32,
    },
    #[error("compositing inputs differ in length: {densities} densities, {colors} colors, {spacings} spacings")]
    LengthMismatch {
        densities: usize,
        colors: usize,
        spacings: usize,
    },
    #[error("negative density {0} at sample {1}")]
    NegativeDensity(f64, usize),
    #[error("an uncertainty threshold was set but no uncertainty field was supplied")]
    MissingUncertainty,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid render options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Error)]
pub enum UqError {
    #[error("uncertainty estimation needs at least one camera")]
    NoCameras,
    #[error("non-finite field gradient at sample {0}")]
    NonFiniteGradient(usize),
    #[error("invalid uncertainty config: {0}")]
    InvalidConfig(String),
    #[error("deformation grid is not at the Laplace evaluation point (theta != 0)")]
    NotAtMode,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("sparsification step must lie in (0, 0.5], got {0}")]
    InvalidStep(f64),
    #[error("rank correlation undefined: {0}")]
    Degenerate(String),
    #[error("ensemble needs at least two members, got {0}")]
    TooFewMembers(usize),
    #[error("coverage mask not present")]
    MissingCoverage,
    #[error(transparent)]
    Train(#[from] FieldError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("camera {index}: invalid pose: {message}")]
    InvalidPose { index: usize, message: String },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("resolution {0:?} overflows addressable size")]
    ResolutionOverflow([u64; 3]),
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl SceneIoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Umbrella error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    SceneIo(#[from] SceneIoError),
}

impl Error {
    /// Short, stable category name for machine-parsable reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Field(FieldError::UnknownSceneKind(_)) => "unknown-scene",
            Error::Field(FieldError::InvalidConfig(_)) => "config",
            Error::Field(_) => "field",
            Error::Render(_) => "render",
            Error::Uq(UqError::InvalidConfig(_)) => "config",
            Error::Uq(_) => "uq",
            Error::Eval(_) => "eval",
            Error::SceneIo(SceneIoError::Io { .. }) => "io",
            Error::SceneIo(SceneIoError::Malformed { .. }) => "malformed",
            Error::SceneIo(SceneIoError::InvalidPose { .. }) => "pose",
            Error::SceneIo(SceneIoError::Invariant(_)) => "invariant",
            Error::SceneIo(SceneIoError::BadMagic { .. }) => "format",
            Error::SceneIo(SceneIoError::Truncated { .. }) => "truncated",
            Error::SceneIo(SceneIoError::ResolutionOverflow(_)) => "overflow",
            Error::SceneIo(SceneIoError::Image { .. }) => "image",
        }
    }
}
