//! Pinhole cameras, primary rays and the camera rigs used by the built-in
//! scenes.
//!
//! Camera space follows the usual computer-vision convention: `+z` looks
//! forward, `+x` to the right and `+y` down the image.

use nalgebra::Matrix3;

use crate::error::RenderError;
use crate::geometry::{Aabb, Vec3};

const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// World-from-camera rotation.
    pub rotation: Matrix3<f64>,
    /// Camera center in world coordinates.
    pub translation: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Restricts `[near, far]` to the part of the ray inside `bounds`.
    pub fn clipped_to(&self, bounds: &Aabb) -> Option<Ray> {
        let (t0, t1) = bounds.intersect_ray(&self.origin, &self.direction)?;
        let near = t0.max(self.near);
        let far = t1.min(self.far);
        (far > near).then_some(Ray { near, far, ..*self })
    }
}

impl Camera {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vec3,
        intrinsics: [f64; 4],
        width: u32,
        height: u32,
    ) -> Result<Self, RenderError> {
        let [fx, fy, cx, cy] = intrinsics;
        let cam = Self {
            rotation,
            translation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(RenderError::InvalidCamera(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera("empty image".into()));
        }
        if self.rotation.iter().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(RenderError::InvalidCamera("non-finite pose".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        if (gram - Matrix3::identity()).abs().max() > ORTHONORMAL_TOL {
            return Err(RenderError::InvalidCamera("rotation is not orthonormal".into()));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(RenderError::InvalidCamera(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fov_y_deg: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, RenderError> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| RenderError::InvalidCamera("eye coincides with target".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| RenderError::InvalidCamera("up is parallel to view".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Self::new(
            rotation,
            eye,
            [f, f, 0.5 * width as f64, 0.5 * height as f64],
            width,
            height,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// 3x4 row-major `[R | t]`.
    pub fn pose_rows(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[4 * r + c] = self.rotation[(r, c)];
            }
            out[4 * r + 3] = self.translation[r];
        }
        out
    }

    pub fn from_pose_rows(
        pose: &[f64; 12],
        intrinsics: [f64; 4],
        width: u32,
        height: u32,
    ) -> Result<Self, RenderError> {
        let rotation = Matrix3::new(
            pose[0], pose[1], pose[2], pose[4], pose[5], pose[6], pose[8], pose[9], pose[10],
        );
        let translation = Vec3::new(pose[3], pose[7], pose[11]);
        Self::new(rotation, translation, intrinsics, width, height)
    }

    pub fn intrinsics(&self) -> [f64; 4] {
        [self.fx, self.fy, self.cx, self.cy]
    }
}

/// Primary ray through the center of pixel `(px, py)`.
pub fn generate_ray(camera: &Camera, px: u32, py: u32) -> Result<Ray, RenderError> {
    if px >= camera.width || py >= camera.height {
        return Err(RenderError::PixelOutOfRange {
            px,
            py,
            width: camera.width,
            height: camera.height,
        });
    }
    Ok(pixel_ray(camera, px as f64 + 0.5, py as f64 + 0.5))
}

/// Ray through continuous image coordinates (pixel centers sit at `+0.5`).
pub fn pixel_ray(camera: &Camera, x: f64, y: f64) -> Ray {
    let d_cam = Vec3::new((x - camera.cx) / camera.fx, (y - camera.cy) / camera.fy, 1.0);
    let direction = (camera.rotation * d_cam).normalize();
    Ray {
        origin: camera.translation,
        direction,
        near: 0.0,
        far: f64::INFINITY,
    }
}

/// Uniform sampling of pixels over the union of several cameras.
#[derive(Debug, Clone)]
pub struct PixelSampler {
    offsets: Vec<usize>,
    widths: Vec<u32>,
    total: usize,
}

impl PixelSampler {
    pub fn new(cameras: &[Camera]) -> Self {
        let mut offsets = Vec::with_capacity(cameras.len());
        let mut total = 0usize;
        for c in cameras {
            offsets.push(total);
            total += c.pixel_count();
        }
        Self {
            offsets,
            widths: cameras.iter().map(|c| c.width).collect(),
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// `(camera index, px, py)` of global pixel `p < total`.
    pub fn locate(&self, p: usize) -> (usize, u32, u32) {
        let cam = self.offsets.partition_point(|&o| o <= p) - 1;
        let local = (p - self.offsets[cam]) as u32;
        (cam, local % self.widths[cam], local / self.widths[cam])
    }

    pub fn draw<R: rand::Rng>(&self, rng: &mut R) -> (usize, u32, u32) {
        self.locate(rng.gen_range(0..self.total))
    }
}

/// Camera rigs around a scene box: `radius` is the distance from the box
/// center in units of the box half-extent.
pub mod rig {
    use super::*;

    pub const DEFAULT_SIZE: u32 = 48;
    pub const DEFAULT_FOV_DEG: f64 = 40.0;

    fn eye_at(bounds: &Aabb, radius: f64, azimuth: f64, elevation: f64) -> Vec3 {
        let half = 0.5 * bounds.extent().max();
        let r = radius * half;
        bounds.center()
            + Vec3::new(
                r * elevation.cos() * azimuth.cos(),
                r * elevation.cos() * azimuth.sin(),
                r * elevation.sin(),
            )
    }

    fn up_for(elevation: f64) -> Vec3 {
        if elevation.abs() > 1.5 {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        }
    }

    /// Camera on a sphere around the box center, looking at the center.
    pub fn orbit(
        bounds: &Aabb,
        radius: f64,
        azimuth: f64,
        elevation: f64,
        fov_deg: f64,
        size: u32,
    ) -> Camera {
        let eye = eye_at(bounds, radius, azimuth, elevation);
        Camera::look_at(eye, bounds.center(), up_for(elevation), fov_deg, size, size)
            .expect("orbit cameras are well formed")
    }

    /// `n` cameras evenly spaced in azimuth at one elevation (radians).
    pub fn ring(
        bounds: &Aabb,
        n: usize,
        radius: f64,
        elevation: f64,
        azimuth_offset: f64,
        fov_deg: f64,
        size: u32,
    ) -> Vec<Camera> {
        (0..n)
            .map(|i| {
                let az = azimuth_offset + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                orbit(bounds, radius, az, elevation, fov_deg, size)
            })
            .collect()
    }

    /// `n` cameras spread over the hemisphere `z > 0` (Fibonacci lattice),
    /// keeping at least `min_elevation` radians above the equator.
    pub fn upper_hemisphere(
        bounds: &Aabb,
        n: usize,
        radius: f64,
        min_elevation: f64,
        fov_deg: f64,
        size: u32,
    ) -> Vec<Camera> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let lo = min_elevation.sin();
        (0..n)
            .map(|i| {
                let z = lo + (1.0 - lo) * (i as f64 + 0.5) / n as f64;
                let elevation = z.asin().min(1.45);
                orbit(bounds, radius, golden * i as f64, elevation, fov_deg, size)
            })
            .collect()
    }

    /// `n` cameras spread over the whole sphere.
    pub fn full_sphere(bounds: &Aabb, n: usize, radius: f64, fov_deg: f64, size: u32) -> Vec<Camera> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let elevation = z.asin().clamp(-1.45, 1.45);
                orbit(bounds, radius, golden * i as f64, elevation, fov_deg, size)
            })
            .collect()
    }
}
