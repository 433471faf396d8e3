//! Vertex-aligned regular lattices over `[0,1]^3` and trilinear interpolation.
//!
//! A lattice with `n` vertices along an axis places them at `u = i / (n - 1)`.
//! Storage is row-major with x fastest: `index = i + nx * (j + ny * k)`.
//! Cells are half-open on the upper side, so a coordinate exactly on an
//! interior cell boundary belongs to the cell on its `+` side; the last cell
//! along each axis is closed.
//!
//! The same interpolant backs the radiance grids, the deformation field and
//! the uncertainty field.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dims: [usize; 3],
}

/// The 8 corners of the cell containing a point (corner `c` sits at offset
/// `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`), their trilinear weights, the
/// fractional position inside the cell and the cell count per axis.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub corners: [usize; 8],
    pub weights: [f64; 8],
    pub frac: [f64; 3],
    pub cells: [f64; 3],
}

/// `(1-f) a + f b`, returning `a` unchanged when `a == b` so constant data
/// interpolates exactly.
#[inline(always)]
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    if a == b {
        a
    } else {
        (1.0 - f) * a + f * b
    }
}

impl Lattice {
    pub fn new(dims: [usize; 3]) -> Result<Self, FieldError> {
        if dims.iter().any(|&n| n < 2) {
            return Err(FieldError::InvalidResolution(dims));
        }
        Ok(Self { dims })
    }

    pub fn cubic(n: usize) -> Result<Self, FieldError> {
        Self::new([n; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Normalized position of a vertex.
    pub fn vertex_position(&self, index: usize) -> Vec3 {
        let c = self.coords(index);
        Vec3::new(
            c[0] as f64 / (self.dims[0] - 1) as f64,
            c[1] as f64 / (self.dims[1] - 1) as f64,
            c[2] as f64 / (self.dims[2] - 1) as f64,
        )
    }

    /// Cell base index and fractional offset along each axis.
    /// Coordinates are clamped to `[0,1]`.
    #[inline]
    fn cell(&self, u: &Vec3) -> ([usize; 3], [f64; 3]) {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let cells = (self.dims[a] - 1) as f64;
            let s = u[a].clamp(0.0, 1.0) * cells;
            let i = (s.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        (base, frac)
    }

    /// Interpolation stencil at `u`. Out-of-range coordinates are clamped to
    /// the unit cube; non-finite ones are rejected.
    pub fn stencil(&self, u: &Vec3) -> Result<Stencil, FieldError> {
        if !(u[0].is_finite() && u[1].is_finite() && u[2].is_finite()) {
            return Err(FieldError::NonFiniteCoordinate([u[0], u[1], u[2]]));
        }
        Ok(self.stencil_unchecked(u))
    }

    /// As [`Lattice::stencil`] without the finiteness check. NaN input yields
    /// garbage weights but never an out-of-bounds index.
    #[inline]
    pub fn stencil_unchecked(&self, u: &Vec3) -> Stencil {
        let (base, f) = self.cell(u);
        let scale = [
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        ];
        let g = [1.0 - f[0], 1.0 - f[1], 1.0 - f[2]];
        let mut st = Stencil {
            corners: [0; 8],
            weights: [0.0; 8],
            frac: f,
            cells: scale,
        };
        for c in 0..8 {
            let bx = c & 1;
            let by = (c >> 1) & 1;
            let bz = (c >> 2) & 1;
            let wx = if bx == 1 { f[0] } else { g[0] };
            let wy = if by == 1 { f[1] } else { g[1] };
            let wz = if bz == 1 { f[2] } else { g[2] };
            st.corners[c] = self.index(base[0] + bx, base[1] + by, base[2] + bz);
            st.weights[c] = wx * wy * wz;
        }
        st
    }
}

/// Storage types a grid may hold; interpolation always runs in `f64`.
pub trait GridScalar: Copy + Default + Into<f64> + Send + Sync + 'static {}
impl GridScalar for f32 {}
impl GridScalar for f64 {}

/// A lattice carrying `C` channels per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T, const C: usize> {
    lattice: Lattice,
    values: Vec<[T; C]>,
}

/// Interpolated value and its exact derivative w.r.t. the normalized
/// coordinate: `gradient[channel][axis]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrilinearSample<const C: usize> {
    pub value: [f64; C],
    pub gradient: [[f64; 3]; C],
}

impl<T: GridScalar, const C: usize> Grid<T, C> {
    pub fn filled(lattice: Lattice, value: [T; C]) -> Self {
        Self {
            lattice,
            values: vec![value; lattice.len()],
        }
    }

    pub fn from_values(lattice: Lattice, values: Vec<[T; C]>) -> Result<Self, FieldError> {
        if values.len() != lattice.len() {
            return Err(FieldError::DimensionMismatch(format!(
                "{} values for a lattice of {} vertices",
                values.len(),
                lattice.len()
            )));
        }
        Ok(Self { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[[T; C]] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [[T; C]] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<[T; C]> {
        self.values
    }

    /// Trilinear blend of the 8 corner values, evaluated as nested lerps
    /// along x, then y, then z. Vertices and constant data are reproduced
    /// exactly.
    #[inline]
    pub fn blend(&self, st: &Stencil) -> [f64; C] {
        let mut out = [0.0; C];
        let f = st.frac;
        for (ch, o) in out.iter_mut().enumerate() {
            let v = |c: usize| -> f64 { self.values[st.corners[c]][ch].into() };
            let c00 = lerp(v(0), v(1), f[0]);
            let c10 = lerp(v(2), v(3), f[0]);
            let c01 = lerp(v(4), v(5), f[0]);
            let c11 = lerp(v(6), v(7), f[0]);
            *o = lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2]);
        }
        out
    }

    /// As [`Grid::blend`], plus the exact derivative w.r.t. the normalized
    /// coordinate. Derivatives are built from corner differences, so they
    /// vanish exactly along axes where the data is constant.
    #[inline]
    pub fn blend_with_gradient(&self, st: &Stencil) -> TrilinearSample<C> {
        let mut value = [0.0; C];
        let mut gradient = [[0.0; 3]; C];
        let f = st.frac;
        for ch in 0..C {
            let v = |c: usize| -> f64 { self.values[st.corners[c]][ch].into() };
            let (v0, v1, v2, v3, v4, v5, v6, v7) = (v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7));
            let c00 = lerp(v0, v1, f[0]);
            let c10 = lerp(v2, v3, f[0]);
            let c01 = lerp(v4, v5, f[0]);
            let c11 = lerp(v6, v7, f[0]);
            let c0 = lerp(c00, c10, f[1]);
            let c1 = lerp(c01, c11, f[1]);
            value[ch] = lerp(c0, c1, f[2]);
            let dx0 = lerp(v1 - v0, v3 - v2, f[1]);
            let dx1 = lerp(v5 - v4, v7 - v6, f[1]);
            gradient[ch] = [
                lerp(dx0, dx1, f[2]) * st.cells[0],
                lerp(c10 - c00, c11 - c01, f[2]) * st.cells[1],
                (c1 - c0) * st.cells[2],
            ];
        }
        TrilinearSample { value, gradient }
    }

    /// Trilinear value and analytic gradient at normalized coordinate `u`.
    pub fn sample(&self, u: &Vec3) -> Result<TrilinearSample<C>, FieldError> {
        let st = self.lattice.stencil(u)?;
        Ok(self.blend_with_gradient(&st))
    }
}

/// Free-function form of [`Grid::sample`].
pub fn trilinear_sample<T: GridScalar, const C: usize>(
    grid: &Grid<T, C>,
    u: &Vec3,
) -> Result<TrilinearSample<C>, FieldError> {
    grid.sample(u)
}
