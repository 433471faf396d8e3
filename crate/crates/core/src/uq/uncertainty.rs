use crate::error::FieldError;
use crate::geometry::{Aabb, Vec3};
use crate::lattice::{Grid, Lattice};

use super::hessian::HessianDiagonal;

/// Per-vertex marginal deviations of the deformation posterior and the
/// spatial uncertainty `U(x)`, the trilinear interpolant of `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyField {
    bounds: Aabb,
    /// `(sigma_x, sigma_y, sigma_z)` per vertex.
    sigma_axes: Vec<[f32; 3]>,
    sigma: Grid<f32, 1>,
    log_min: f64,
    log_max: f64,
    sigma_max: f64,
}

impl UncertaintyField {
    /// Builds the field from stored per-vertex values. `log_range` is
    /// recomputed when `None`.
    pub fn from_parts(
        bounds: Aabb,
        lattice: Lattice,
        sigma_axes: Vec<[f32; 3]>,
        sigma: Vec<f32>,
        log_range: Option<(f64, f64)>,
    ) -> Result<Self, FieldError> {
        if sigma_axes.len() != lattice.len() {
            return Err(FieldError::DimensionMismatch(format!(
                "{} axis triples for {} vertices",
                sigma_axes.len(),
                lattice.len()
            )));
        }
        let sigma = Grid::from_values(lattice, sigma.into_iter().map(|s| [s]).collect())?;
        let (lo, hi) = log_stats(sigma.values());
        let (log_min, log_max) = log_range.unwrap_or((lo, hi));
        let sigma_max = sigma
            .values()
            .iter()
            .map(|s| s[0] as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            bounds,
            sigma_axes,
            sigma,
            log_min,
            log_max,
            sigma_max,
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn lattice(&self) -> &Lattice {
        self.sigma.lattice()
    }

    pub fn resolution(&self) -> usize {
        self.lattice().dims()[0]
    }

    pub fn sigma_axes(&self) -> &[[f32; 3]] {
        &self.sigma_axes
    }

    pub fn sigma(&self) -> impl ExactSizeIterator<Item = f32> + '_ {
        self.sigma.values().iter().map(|s| s[0])
    }

    pub fn vertex_sigma(&self, vertex: usize) -> f32 {
        self.sigma.values()[vertex][0]
    }

    /// `(min, max)` of `ln sigma` over vertices.
    pub fn log_sigma_range(&self) -> (f64, f64) {
        (self.log_min, self.log_max)
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma_max
    }

    /// `U(x)`; the maximum vertex sigma outside the box.
    pub fn uncertainty_at(&self, x: &Vec3) -> f64 {
        let u = self.bounds.to_unit(x);
        if !(0..3).all(|a| u[a] >= 0.0 && u[a] <= 1.0) {
            return self.sigma_max;
        }
        let st = self.lattice().stencil_unchecked(&u);
        self.sigma.blend(&st)[0]
    }

    pub fn log_uncertainty_at(&self, x: &Vec3) -> f64 {
        self.uncertainty_at(x).ln()
    }

    /// Maps `ln U` onto `[0,1]` using the vertex range; 0 for a constant field.
    pub fn normalize_log(&self, log_u: f64) -> f64 {
        let span = self.log_max - self.log_min;
        if span > 0.0 {
            ((log_u - self.log_min) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn normalized_log_uncertainty_at(&self, x: &Vec3) -> f64 {
        self.normalize_log(self.log_uncertainty_at(x))
    }
}

fn log_stats(values: &[[f32; 1]]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        let l = (s[0] as f64).ln();
        (lo.min(l), hi.max(l))
    })
}

/// Per vertex and axis, `var = 1 / ((2/R) accum + 2 lambda)` and
/// `sigma_axis = sqrt(var)`; the scalar `sigma` is the Euclidean norm of the
/// three axis deviations.
pub fn compute_uncertainty_field(hess: &HessianDiagonal) -> UncertaintyField {
    let n = hess.lattice().len();
    let mut axes = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for v in 0..n {
        let var = [
            1.0 / hess.diagonal(3 * v),
            1.0 / hess.diagonal(3 * v + 1),
            1.0 / hess.diagonal(3 * v + 2),
        ];
        axes.push([var[0].sqrt() as f32, var[1].sqrt() as f32, var[2].sqrt() as f32]);
        sigma.push((var[0] + var[1] + var[2]).sqrt() as f32);
    }
    UncertaintyField::from_parts(*hess.bounds(), *hess.lattice(), axes, sigma, None)
        .expect("sizes match the accumulator lattice")
}
