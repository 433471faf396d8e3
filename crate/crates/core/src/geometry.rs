//! Axis-aligned scene bounds and the world <-> normalized coordinate map.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::FieldError;

pub type Vec3 = Vector3<f64>;

/// Axis-aligned box. All grid lookups happen in normalized coordinates
/// `u = (x - min) / (max - min)`, so `u` is in `[0,1]^3` inside the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, FieldError> {
        if min.iter().chain(max.iter()).any(|v| !v.is_finite()) {
            return Err(FieldError::InvalidBounds("non-finite corner".into()));
        }
        if (0..3).any(|a| max[a] <= min[a]) {
            return Err(FieldError::InvalidBounds(format!(
                "max {max:?} must exceed min {min:?} on every axis"
            )));
        }
        Ok(Self { min, max })
    }

    /// The symmetric box `[-half, half]^3`.
    pub fn cube(half: f64) -> Self {
        Self {
            min: [-half; 3],
            max: [half; 3],
        }
    }

    pub fn min_corner(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn max_corner(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    pub fn extent(&self) -> Vec3 {
        self.max_corner() - self.min_corner()
    }

    pub fn center(&self) -> Vec3 {
        (self.min_corner() + self.max_corner()) * 0.5
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    pub fn to_unit(&self, x: &Vec3) -> Vec3 {
        Vec3::new(
            (x[0] - self.min[0]) / (self.max[0] - self.min[0]),
            (x[1] - self.min[1]) / (self.max[1] - self.min[1]),
            (x[2] - self.min[2]) / (self.max[2] - self.min[2]),
        )
    }

    pub fn from_unit(&self, u: &Vec3) -> Vec3 {
        Vec3::new(
            self.min[0] + u[0] * (self.max[0] - self.min[0]),
            self.min[1] + u[1] * (self.max[1] - self.min[1]),
            self.min[2] + u[2] * (self.max[2] - self.min[2]),
        )
    }

    /// Slab test. Returns the parametric interval `[t_enter, t_exit]` clipped
    /// to `t >= 0`, or `None` when the ray misses the box.
    pub fn intersect_ray(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a].abs() < 1e-300 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let mut ta = (self.min[a] - origin[a]) * inv;
            let mut tb = (self.max[a] - origin[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        (t1 > t0).then_some((t0, t1))
    }
}

impl Default for Aabb {
    fn default() -> Self {
        Self::cube(1.0)
    }
}
