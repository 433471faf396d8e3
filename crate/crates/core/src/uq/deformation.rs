use crate::field::{FieldSample, VoxelField};
use crate::geometry::{Aabb, Vec3};
use crate::lattice::{Grid, Lattice};
use crate::error::FieldError;

/// Vector displacements on an `M^3` vertex lattice spanning the scene box.
/// Displacements are in normalized coordinates, so a value of `1` moves a
/// point across the whole box.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGrid {
    bounds: Aabb,
    theta: Grid<f64, 3>,
    at_mode: bool,
}

impl DeformationGrid {
    /// The Laplace evaluation point: all displacements zero.
    pub fn zeros(bounds: Aabb, resolution: usize) -> Result<Self, FieldError> {
        let lattice = Lattice::cubic(resolution)?;
        Ok(Self {
            bounds,
            theta: Grid::filled(lattice, [0.0; 3]),
            at_mode: true,
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn lattice(&self) -> &Lattice {
        self.theta.lattice()
    }

    pub fn resolution(&self) -> usize {
        self.lattice().dims()[0]
    }

    /// Number of scalar parameters, `3 * M^3`.
    pub fn param_count(&self) -> usize {
        3 * self.lattice().len()
    }

    pub fn theta(&self) -> &[[f64; 3]] {
        self.theta.values()
    }

    pub fn is_at_mode(&self) -> bool {
        self.at_mode
    }

    /// Parameter `k` is component `k % 3` of vertex `k / 3`.
    pub fn param(&self, k: usize) -> f64 {
        self.theta.values()[k / 3][k % 3]
    }

    pub fn set_param(&mut self, k: usize, value: f64) {
        self.theta.values_mut()[k / 3][k % 3] = value;
        self.at_mode = if value != 0.0 {
            false
        } else {
            self.theta.values().iter().all(|v| v.iter().all(|c| *c == 0.0))
        };
    }

    pub fn set_vertex(&mut self, vertex: usize, value: [f64; 3]) {
        for (a, v) in value.iter().enumerate() {
            self.set_param(3 * vertex + a, *v);
        }
    }

    pub fn reset(&mut self) {
        self.theta.values_mut().fill([0.0; 3]);
        self.at_mode = true;
    }

    /// Displacement at normalized coordinate `u`; zero outside the box.
    #[inline]
    pub fn displacement_unit(&self, u: &Vec3) -> [f64; 3] {
        if !(0..3).all(|a| u[a] >= 0.0 && u[a] <= 1.0) {
            return [0.0; 3];
        }
        let st = self.lattice().stencil_unchecked(u);
        self.theta.blend(&st)
    }

    /// Trilinear blend of the surrounding vertex displacements at world
    /// point `x` (normalized units); zero outside the box.
    pub fn deform(&self, x: &Vec3) -> [f64; 3] {
        self.displacement_unit(&self.bounds.to_unit(x))
    }
}

/// Field query at the displaced point `x + D(x)`. At `theta = 0` this is
/// bit-identical to [`VoxelField::query`].
pub fn perturbed_query(field: &VoxelField, grid: &DeformationGrid, x: &Vec3) -> FieldSample {
    let u = field.bounds().to_unit(x);
    let du = grid.displacement_unit(&grid.bounds().to_unit(x));
    field.query_unit(&Vec3::new(u[0] + du[0], u[1] + du[1], u[2] + du[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{make_synthetic_scene, SceneSpec};

    #[test]
    fn zero_theta_gives_zero_displacement() {
        let g = DeformationGrid::zeros(Aabb::cube(1.0), 4).unwrap();
        assert!(g.is_at_mode());
        for x in [Vec3::zeros(), Vec3::new(0.3, -0.9, 0.99), Vec3::new(2.0, 0.0, 0.0)] {
            assert_eq!(g.deform(&x), [0.0; 3]);
        }
    }

    #[test]
    fn vertex_reproduction_and_center_weight() {
        let b = Aabb::new([0.0; 3], [1.0; 3]).unwrap();
        let mut g = DeformationGrid::zeros(b, 3).unwrap();
        let v = g.lattice().index(1, 2, 0);
        g.set_vertex(v, [0.1, -0.2, 0.3]);
        assert!(!g.is_at_mode());
        assert_eq!(g.deform(&Vec3::new(0.5, 1.0, 0.0)), [0.1, -0.2, 0.3]);
        g.reset();
        g.set_vertex(g.lattice().index(0, 0, 0), [1.0, 0.0, 0.0]);
        let d = g.deform(&Vec3::new(0.25, 0.25, 0.25));
        assert!((d[0] - 0.125).abs() < 1e-15 && d[1] == 0.0 && d[2] == 0.0);
        // outside the box nothing moves
        assert_eq!(g.deform(&Vec3::new(-0.1, 0.0, 0.0)), [0.0; 3]);
        g.set_param(0, 0.0);
        assert!(g.is_at_mode());
    }

    #[test]
    fn identity_at_mode_and_uniform_shift() {
        let b = Aabb::new([0.0; 3], [1.0; 3]).unwrap();
        let field = make_synthetic_scene(&SceneSpec::preset("sphere").unwrap(), 9, b).unwrap();
        let mut g = DeformationGrid::zeros(b, 4).unwrap();
        let pts = [
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::new(0.21, 0.33, 0.71),
            Vec3::new(0.8, 0.1, 0.45),
        ];
        for x in &pts {
            assert_eq!(perturbed_query(&field, &g, x), field.query(x));
        }
        let t = 0.03;
        for v in 0..g.lattice().len() {
            g.set_vertex(v, [t, 0.0, 0.0]);
        }
        for x in &pts {
            let a = perturbed_query(&field, &g, x);
            let b = field.query(&(x + Vec3::new(t, 0.0, 0.0)));
            assert!((a.density - b.density).abs() < 1e-9);
            for c in 0..3 {
                assert!((a.color[c] - b.color[c]).abs() < 1e-12);
            }
        }
    }
}
