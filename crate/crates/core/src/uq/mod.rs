//! Post-hoc spatial uncertainty of a trained field.
//!
//! The field is re-parametrized by a trilinear deformation grid `theta`
//! applied to query coordinates, `tau~(x) = tau(x + D(x))`,
//! `c~(x) = c(x + D(x))`. The trained field is the mode at `theta = 0`; a
//! diagonal Laplace approximation around it gives a marginal deviation per
//! vertex and axis, and the norm of those deviations interpolated over space
//! is the uncertainty field `U`.

mod deformation;
mod hessian;
mod jacobian;
mod uncertainty;

pub use deformation::{perturbed_query, DeformationGrid};
pub use hessian::{accumulate_hessian_diag, sample_batch_rays, HessianDiagonal, SampledRay};
pub use jacobian::{ray_jacobian, ray_jacobian_sq, RayJacobian, SquaredJacobian};
pub use uncertainty::{compute_uncertainty_field, UncertaintyField};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Ray};
use crate::error::UqError;
use crate::field::VoxelField;
use crate::render::{accumulate, sample_stratified, RenderOptions, SampleMode, ImageRgb};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UqConfig {
    /// Deformation grid vertices per axis, `M`.
    pub resolution: usize,
    /// Prior precision; `1e-4 / M^3` when unset.
    pub lambda: Option<f64>,
    pub batches: usize,
    pub rays_per_batch: usize,
    pub samples_per_ray: usize,
    pub seed: u64,
    /// Jitter sample positions within their bins.
    pub jitter: bool,
    #[serde(default)]
    pub background: [f64; 3],
}

impl Default for UqConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            lambda: None,
            batches: 1000,
            rays_per_batch: 4096,
            samples_per_ray: 64,
            seed: 0,
            jitter: true,
            background: [0.0; 3],
        }
    }
}

impl UqConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda
            .unwrap_or_else(|| 1e-4 / (self.resolution as f64).powi(3))
    }

    pub fn validate(&self) -> Result<(), UqError> {
        if self.resolution < 2 {
            return Err(UqError::InvalidConfig(format!(
                "deformation resolution must be >= 2, got {}",
                self.resolution
            )));
        }
        let l = self.lambda();
        if !(l > 0.0 && l.is_finite()) {
            return Err(UqError::InvalidConfig(format!("lambda must be > 0, got {l}")));
        }
        if self.samples_per_ray == 0 {
            return Err(UqError::InvalidConfig("samples_per_ray must be >= 1".into()));
        }
        Ok(())
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            samples_per_ray: self.samples_per_ray,
            mode: SampleMode::Midpoint,
            background: self.background,
            threshold: None,
        }
    }
}

/// Result of a full uncertainty pass.
#[derive(Debug, Clone)]
pub struct UqRun {
    pub hessian: HessianDiagonal,
    pub field: UncertaintyField,
    pub elapsed: Duration,
}

/// Accumulates the Hessian diagonal over the training cameras and turns it
/// into an uncertainty field.
pub fn estimate_uncertainty(
    field: &VoxelField,
    cameras: &[Camera],
    config: &UqConfig,
) -> Result<UqRun, UqError> {
    config.validate()?;
    let start = Instant::now();
    let grid = DeformationGrid::zeros(*field.bounds(), config.resolution)
        .map_err(|e| UqError::InvalidConfig(e.to_string()))?;
    let hessian = accumulate_hessian_diag(field, &grid, cameras, config)?;
    let uf = compute_uncertainty_field(&hessian);
    Ok(UqRun {
        hessian,
        field: uf,
        elapsed: start.elapsed(),
    })
}

/// Renders one ray through the deformed field `C~_theta(r)`.
pub fn render_perturbed_ray(
    field: &VoxelField,
    grid: &DeformationGrid,
    ray: &Ray,
    options: &RenderOptions,
    mode: SampleMode,
) -> [f64; 3] {
    let Some(ray) = ray.clipped_to(field.bounds()) else {
        return options.background;
    };
    let samples = sample_stratified(&ray, options.samples_per_ray, mode);
    let (dens, cols): (Vec<f64>, Vec<[f64; 3]>) = samples
        .points
        .iter()
        .map(|x| {
            let q = perturbed_query(field, grid, x);
            (q.density, q.color)
        })
        .unzip();
    let mut w = Vec::with_capacity(dens.len());
    accumulate(&dens, &cols, &samples.delta, &samples.t, &mut w).blended(options.background)
}

/// Gradient of the deformation objective at `theta = 0`,
/// `(2/R) sum_r J_r^T (C(r) - C_gt(r))`, over the given pixels. Its norm should
/// be near zero when the field really is at a mode of the photometric loss.
pub fn mode_gradient(
    field: &VoxelField,
    cameras: &[Camera],
    images: &[ImageRgb],
    pixels: &[(usize, u32, u32)],
    config: &UqConfig,
) -> Result<Vec<f64>, UqError> {
    if cameras.is_empty() {
        return Err(UqError::NoCameras);
    }
    let grid = DeformationGrid::zeros(*field.bounds(), config.resolution)
        .map_err(|e| UqError::InvalidConfig(e.to_string()))?;
    let options = config.render_options();
    let mut grad = vec![0.0; grid.param_count()];
    for &(cam, px, py) in pixels {
        let ray = crate::camera::generate_ray(&cameras[cam], px, py)?;
        let jac = ray_jacobian(field, &grid, &ray, &options, SampleMode::Midpoint)?;
        let gt = images[cam].pixel(px, py);
        let res = [jac.color[0] - gt[0], jac.color[1] - gt[1], jac.color[2] - gt[2]];
        for (v, d) in &jac.entries {
            for a in 0..3 {
                grad[3 * v + a] += d[a][0] * res[0] + d[a][1] * res[1] + d[a][2] * res[2];
            }
        }
    }
    let scale = 2.0 / pixels.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// Threshold on `|grad h(0)|` above which the Laplace approximation is
/// reported as untrustworthy.
pub const MODE_GRADIENT_TOL: f64 = 1e-3;

/// Computes [`mode_gradient`] and logs a warning when its norm exceeds
/// [`MODE_GRADIENT_TOL`]. Returns the norm.
pub fn check_mode(
    field: &VoxelField,
    cameras: &[Camera],
    images: &[ImageRgb],
    pixels: &[(usize, u32, u32)],
    config: &UqConfig,
) -> Result<f64, UqError> {
    let g = mode_gradient(field, cameras, images, pixels, config)?;
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > MODE_GRADIENT_TOL {
        log::warn!(
            "gradient of the deformation objective at theta=0 has norm {norm:.3e} (> {MODE_GRADIENT_TOL:e}); \
             the field may not be at a mode and the Laplace approximation is less reliable"
        );
    }
    Ok(norm)
}
