//! Diagonal of the negative Hessian of the deformation posterior,
//! `diag(-H) ~= (2/R) sum_r diag(J_r^T J_r) + 2 lambda`.
//!
//! Only the pre-trained field and the training cameras are read; the training
//! images never enter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{generate_ray, Camera, PixelSampler, Ray};
use crate::error::UqError;
use crate::field::VoxelField;
use crate::geometry::Aabb;
use crate::lattice::Lattice;
use crate::render::{mix_seed, RenderOptions, SampleMode};

use super::deformation::DeformationGrid;
use super::jacobian::{ray_jacobian_with, JacobianScratch, SquaredJacobian};
use super::UqConfig;

/// Rays are processed in chunks this large: Jacobians of a chunk are
/// computed in parallel, then folded into the accumulator in ray order.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct HessianDiagonal {
    bounds: Aabb,
    lattice: Lattice,
    /// Sum over rays of squared color-Jacobian entries, per vertex and axis.
    accum: Vec<[f64; 3]>,
    ray_count: u64,
    lambda: f64,
}

/// A ray paired with the jitter mode used to sample it.
#[derive(Debug, Clone, Copy)]
pub struct SampledRay {
    pub ray: Ray,
    pub mode: SampleMode,
}

impl HessianDiagonal {
    pub fn new(grid: &DeformationGrid, lambda: f64) -> Result<Self, UqError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(UqError::InvalidConfig(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self {
            bounds: *grid.bounds(),
            lattice: *grid.lattice(),
            accum: vec![[0.0; 3]; grid.lattice().len()],
            ray_count: 0,
            lambda,
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn accum(&self) -> &[[f64; 3]] {
        &self.accum
    }

    pub fn ray_count(&self) -> u64 {
        self.ray_count
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(2/R) accum_k + 2 lambda`; the data term vanishes when `R = 0`.
    pub fn diagonal(&self, k: usize) -> f64 {
        let data = if self.ray_count == 0 {
            0.0
        } else {
            2.0 / self.ray_count as f64 * self.accum[k / 3][k % 3]
        };
        data + 2.0 * self.lambda
    }

    pub fn diagonal_vec(&self) -> Vec<f64> {
        (0..3 * self.accum.len()).map(|k| self.diagonal(k)).collect()
    }

    /// Adds one ray's squared Jacobian and counts the ray.
    pub fn add_ray(&mut self, jac: &SquaredJacobian) {
        for (k, sq) in &jac.entries {
            self.accum[k / 3][k % 3] += sq;
        }
        self.ray_count += 1;
    }

    /// Accumulates `rays` in order. Accumulating `A` then `B` gives exactly
    /// the same state as accumulating `A` followed by `B` in one call.
    pub fn accumulate_rays(
        &mut self,
        field: &VoxelField,
        grid: &DeformationGrid,
        rays: &[SampledRay],
        options: &RenderOptions,
    ) -> Result<(), UqError> {
        self.check(field, grid)?;
        for chunk in rays.chunks(CHUNK) {
            let jacs: Vec<Result<SquaredJacobian, UqError>> = chunk
                .par_iter()
                .map_init(JacobianScratch::default, |scratch, r| {
                    ray_jacobian_with(field, grid, &r.ray, options, r.mode, scratch)
                        .map(|j| j.squared())
                })
                .collect();
            for j in jacs {
                self.add_ray(&j?);
            }
        }
        Ok(())
    }

    fn check(&self, field: &VoxelField, grid: &DeformationGrid) -> Result<(), UqError> {
        if !grid.is_at_mode() {
            return Err(UqError::NotAtMode);
        }
        if grid.lattice() != &self.lattice || grid.bounds() != &self.bounds {
            return Err(UqError::GridMismatch(
                "deformation grid differs from the accumulator's".into(),
            ));
        }
        if field.bounds() != &self.bounds {
            return Err(UqError::GridMismatch(
                "field and deformation grid cover different boxes".into(),
            ));
        }
        Ok(())
    }
}

/// Uniformly random pixels over the union of all cameras, as rays.
/// Deterministic in `(seed, batch)`.
pub fn sample_batch_rays(
    cameras: &[Camera],
    rays: usize,
    seed: u64,
    batch: u64,
    jitter: bool,
) -> Result<Vec<SampledRay>, UqError> {
    if cameras.is_empty() {
        return Err(UqError::NoCameras);
    }
    let sampler = PixelSampler::new(cameras);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, batch));
    let mut out = Vec::with_capacity(rays);
    for _ in 0..rays {
        let (cam, px, py) = sampler.draw(&mut rng);
        let ray = generate_ray(&cameras[cam], px, py)?;
        let mode = if jitter {
            SampleMode::Jitter(rng.gen())
        } else {
            SampleMode::Midpoint
        };
        out.push(SampledRay { ray, mode });
    }
    Ok(out)
}

/// Draws `config.batches x config.rays_per_batch` random training rays and
/// accumulates their squared color Jacobians at `theta = 0`.
pub fn accumulate_hessian_diag(
    field: &VoxelField,
    grid: &DeformationGrid,
    cameras: &[Camera],
    config: &UqConfig,
) -> Result<HessianDiagonal, UqError> {
    config.validate()?;
    if cameras.is_empty() {
        return Err(UqError::NoCameras);
    }
    let mut hess = HessianDiagonal::new(grid, config.lambda())?;
    hess.check(field, grid)?;
    let options = config.render_options();
    for b in 0..config.batches {
        let rays = sample_batch_rays(cameras, config.rays_per_batch, config.seed, b as u64, config.jitter)?;
        hess.accumulate_rays(field, grid, &rays, &options)?;
        if config.batches >= 10 && (b + 1) % (config.batches / 10) == 0 {
            log::debug!("uq: {}/{} batches", b + 1, config.batches);
        }
    }
    Ok(hess)
}
