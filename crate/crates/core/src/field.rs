//! Explicit voxel radiance field.
//!
//! Raw (pre-activation) density and color live on a vertex lattice spanning
//! the scene box. Queries interpolate the raw values trilinearly and then
//! apply softplus to density and a logistic sigmoid to color, so density is
//! non-negative and color stays in `[0,1]^3` everywhere. Color does not depend
//! on view direction.

use crate::error::FieldError;
use crate::geometry::{Aabb, Vec3};
use crate::lattice::{Grid, Lattice, Stencil};

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`], clamped away from 0 and 1.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-4, 1.0 - 1e-4);
    (p / (1.0 - p)).ln()
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub density: f64,
    pub color: [f64; 3],
}

impl FieldSample {
    pub const EMPTY: FieldSample = FieldSample {
        density: 0.0,
        color: [0.0; 3],
    };
}

/// Activated values with spatial derivatives. `d_color[channel][axis]`.
/// Whether the derivatives are w.r.t. world or normalized coordinates
/// depends on the query that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGradient {
    pub density: f64,
    pub color: [f64; 3],
    pub d_density: [f64; 3],
    pub d_color: [[f64; 3]; 3],
}

impl FieldGradient {
    pub const EMPTY: FieldGradient = FieldGradient {
        density: 0.0,
        color: [0.0; 3],
        d_density: [0.0; 3],
        d_color: [[0.0; 3]; 3],
    };

    pub fn sample(&self) -> FieldSample {
        FieldSample {
            density: self.density,
            color: self.color,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    bounds: Aabb,
    raw_density: Grid<f32, 1>,
    raw_color: Grid<f32, 3>,
}

#[inline]
fn inside_unit(u: &Vec3) -> bool {
    (0..3).all(|a| u[a] >= 0.0 && u[a] <= 1.0)
}

impl VoxelField {
    pub fn constant(
        bounds: Aabb,
        dims: [usize; 3],
        raw_density: f32,
        raw_color: [f32; 3],
    ) -> Result<Self, FieldError> {
        let lattice = Lattice::new(dims)?;
        Ok(Self {
            bounds,
            raw_density: Grid::filled(lattice, [raw_density]),
            raw_color: Grid::filled(lattice, raw_color),
        })
    }

    pub fn from_grids(
        bounds: Aabb,
        raw_density: Grid<f32, 1>,
        raw_color: Grid<f32, 3>,
    ) -> Result<Self, FieldError> {
        if raw_density.lattice() != raw_color.lattice() {
            return Err(FieldError::DimensionMismatch(format!(
                "density grid {:?} vs color grid {:?}",
                raw_density.lattice().dims(),
                raw_color.lattice().dims()
            )));
        }
        Ok(Self {
            bounds,
            raw_density,
            raw_color,
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn lattice(&self) -> &Lattice {
        self.raw_density.lattice()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.lattice().dims()
    }

    pub fn raw_density(&self) -> &Grid<f32, 1> {
        &self.raw_density
    }

    pub fn raw_color(&self) -> &Grid<f32, 3> {
        &self.raw_color
    }

    pub fn raw_density_mut(&mut self) -> &mut Grid<f32, 1> {
        &mut self.raw_density
    }

    pub fn raw_color_mut(&mut self) -> &mut Grid<f32, 3> {
        &mut self.raw_color
    }

    /// Density and color at a world point; `(0, black)` outside the box.
    pub fn query(&self, x: &Vec3) -> FieldSample {
        self.query_unit(&self.bounds.to_unit(x))
    }

    /// As [`VoxelField::query`] at a normalized coordinate.
    #[inline]
    pub fn query_unit(&self, u: &Vec3) -> FieldSample {
        if !inside_unit(u) {
            return FieldSample::EMPTY;
        }
        let st = self.lattice().stencil_unchecked(u);
        self.activate(&st)
    }

    #[inline]
    pub(crate) fn activate(&self, st: &Stencil) -> FieldSample {
        let d = self.raw_density.blend(st);
        let c = self.raw_color.blend(st);
        FieldSample {
            density: softplus(d[0]),
            color: [sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])],
        }
    }

    /// Values plus derivatives w.r.t. the normalized coordinate `u`.
    /// Zero everywhere outside the unit cube.
    #[inline]
    pub fn query_unit_with_gradient(&self, u: &Vec3) -> FieldGradient {
        if !inside_unit(u) {
            return FieldGradient::EMPTY;
        }
        let st = self.lattice().stencil_unchecked(u);
        self.activate_with_gradient(&st)
    }

    #[inline]
    pub(crate) fn activate_with_gradient(&self, st: &Stencil) -> FieldGradient {
        let d = self.raw_density.blend_with_gradient(st);
        let c = self.raw_color.blend_with_gradient(st);
        let density = softplus(d.value[0]);
        let dd = sigmoid(d.value[0]);
        let mut out = FieldGradient {
            density,
            color: [0.0; 3],
            d_density: [
                dd * d.gradient[0][0],
                dd * d.gradient[0][1],
                dd * d.gradient[0][2],
            ],
            d_color: [[0.0; 3]; 3],
        };
        for ch in 0..3 {
            let s = sigmoid(c.value[ch]);
            let ds = s * (1.0 - s);
            out.color[ch] = s;
            for a in 0..3 {
                out.d_color[ch][a] = ds * c.gradient[ch][a];
            }
        }
        out
    }

    /// Values plus derivatives w.r.t. the world coordinate `x`.
    pub fn query_with_gradient(&self, x: &Vec3) -> FieldGradient {
        let mut g = self.query_unit_with_gradient(&self.bounds.to_unit(x));
        let ext = self.bounds.extent();
        for a in 0..3 {
            g.d_density[a] /= ext[a];
            for ch in 0..3 {
                g.d_color[ch][a] /= ext[a];
            }
        }
        g
    }
}
