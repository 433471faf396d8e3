//! Explicit voxel radiance fields with post-hoc spatial uncertainty.
//!
//! A trained field is re-parametrized by a trilinear deformation grid over its
//! query coordinates. A diagonal Laplace approximation of the photometric
//! posterior over that grid, evaluated at zero deformation, gives a marginal
//! deviation per grid vertex; its trilinear interpolant is a spatial
//! uncertainty field that can be rendered and used to strip unreliable density.

pub mod camera;
pub mod colormap;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod render;
pub mod scene;
pub mod train;
pub mod uq;

pub use camera::{generate_ray, rig, Camera, PixelSampler, Ray};
pub use error::{Error, EvalError, FieldError, RenderError, SceneIoError, UqError};
pub use field::{FieldGradient, FieldSample, VoxelField};
pub use geometry::{Aabb, Vec3};
pub use lattice::{trilinear_sample, Grid, Lattice, Stencil, TrilinearSample};
pub use render::{
    composite, render_channels, render_ray, sample_stratified, ChannelImage, Composite, ImageRgb,
    RaySamples, RenderOptions, SampleMode,
};
pub use scene::{make_synthetic_scene, Blob, SceneSpec};
pub use train::{fit_field, render_images, TrainConfig, TrainOutcome};
pub use uq::{
    accumulate_hessian_diag, compute_uncertainty_field, estimate_uncertainty, DeformationGrid,
    HessianDiagonal, UncertaintyField, UqConfig,
};
