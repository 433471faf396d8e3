//! Per-ray Jacobians of the rendered color w.r.t. the deformation parameters,
//! evaluated analytically at `theta = 0`.
//!
//! For a sample `x_i` with compositing weight `w_i`, transmittance after the
//! sample `T_{i+1}` and spacing `delta_i`,
//!
//! ```text
//! dC/dtau_i       = delta_i * (T_{i+1} c_i - sum_{j>i} w_j c_j - T_N bg)
//! dC/dtheta_{v,a} = sum_i [dC/dtau_i * dtau/du_a(x_i) + w_i * dc/du_a(x_i)] * phi_v(x_i)
//! ```
//!
//! where `phi_v` is the trilinear weight of deformation vertex `v`. Only the
//! vertices of cells holding a sample can appear.

use crate::camera::Ray;
use crate::error::UqError;
use crate::field::VoxelField;
use crate::render::{sample_stratified_into, RaySamples, RenderOptions, SampleMode};

use super::deformation::DeformationGrid;

/// `entries[n] = (vertex, d[axis][channel])`, sorted by vertex.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayJacobian {
    pub entries: Vec<(usize, [[f64; 3]; 3])>,
    /// Rendered color at `theta = 0`.
    pub color: [f64; 3],
}

/// `entries[n] = (k, sum_c (dC_c/dtheta_k)^2)` with `k = 3 * vertex + axis`,
/// sorted by `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SquaredJacobian {
    pub entries: Vec<(usize, f64)>,
}

impl RayJacobian {
    pub fn squared(&self) -> SquaredJacobian {
        let mut entries = Vec::with_capacity(self.entries.len() * 3);
        for (v, d) in &self.entries {
            for (a, row) in d.iter().enumerate() {
                let sq = row[0] * row[0] + row[1] * row[1] + row[2] * row[2];
                if sq != 0.0 {
                    entries.push((3 * v + a, sq));
                }
            }
        }
        SquaredJacobian { entries }
    }
}

#[derive(Default)]
pub(crate) struct JacobianScratch {
    samples: RaySamples,
    grads: Vec<crate::field::FieldGradient>,
    units: Vec<crate::geometry::Vec3>,
    weights: Vec<f64>,
    trans_after: Vec<f64>,
    pending: Vec<(usize, [[f64; 3]; 3])>,
}

/// Full (unsquared) color Jacobian of one ray.
pub fn ray_jacobian(
    field: &VoxelField,
    grid: &DeformationGrid,
    ray: &Ray,
    options: &RenderOptions,
    mode: SampleMode,
) -> Result<RayJacobian, UqError> {
    if !grid.is_at_mode() {
        return Err(UqError::NotAtMode);
    }
    if grid.bounds() != field.bounds() {
        return Err(UqError::GridMismatch(
            "deformation grid and field cover different boxes".into(),
        ));
    }
    ray_jacobian_with(field, grid, ray, options, mode, &mut JacobianScratch::default())
}

/// Squared color Jacobian of one ray, summed over RGB.
pub fn ray_jacobian_sq(
    field: &VoxelField,
    grid: &DeformationGrid,
    ray: &Ray,
    options: &RenderOptions,
    mode: SampleMode,
) -> Result<SquaredJacobian, UqError> {
    Ok(ray_jacobian(field, grid, ray, options, mode)?.squared())
}

pub(crate) fn ray_jacobian_with(
    field: &VoxelField,
    grid: &DeformationGrid,
    ray: &Ray,
    options: &RenderOptions,
    mode: SampleMode,
    s: &mut JacobianScratch,
) -> Result<RayJacobian, UqError> {
    let Some(ray) = ray.clipped_to(field.bounds()) else {
        return Ok(RayJacobian {
            entries: Vec::new(),
            color: options.background,
        });
    };
    sample_stratified_into(&ray, options.samples_per_ray, mode, &mut s.samples);
    let n = s.samples.len();
    s.grads.clear();
    s.units.clear();
    for x in &s.samples.points {
        let u = field.bounds().to_unit(x);
        s.grads.push(field.query_unit_with_gradient(&u));
        s.units.push(u);
    }

    // forward pass
    s.weights.clear();
    s.trans_after.clear();
    let mut trans = 1.0f64;
    let mut rgb = [0.0f64; 3];
    for i in 0..n {
        let od = s.grads[i].density * s.samples.delta[i];
        let w = trans * -(-od).exp_m1();
        trans *= (-od).exp();
        s.weights.push(w);
        s.trans_after.push(trans);
        for c in 0..3 {
            rgb[c] += w * s.grads[i].color[c];
        }
    }
    let bg = options.background;
    let color = [
        rgb[0] + trans * bg[0],
        rgb[1] + trans * bg[1],
        rgb[2] + trans * bg[2],
    ];

    // backward pass; `tail` holds sum_{j>i} w_j c_j + T_N bg
    let mut tail = [trans * bg[0], trans * bg[1], trans * bg[2]];
    s.pending.clear();
    for i in (0..n).rev() {
        let g = &s.grads[i];
        let w = s.weights[i];
        let mut d_tau = [0.0; 3];
        for c in 0..3 {
            d_tau[c] = s.samples.delta[i] * (s.trans_after[i] * g.color[c] - tail[c]);
            tail[c] += w * g.color[c];
        }
        // local[a][c]
        let mut local = [[0.0f64; 3]; 3];
        let mut any = false;
        for a in 0..3 {
            for c in 0..3 {
                let v = d_tau[c] * g.d_density[a] + w * g.d_color[c][a];
                local[a][c] = v;
                any |= v != 0.0;
            }
        }
        if !local.iter().flatten().all(|v| v.is_finite()) {
            return Err(UqError::NonFiniteGradient(i));
        }
        if !any {
            continue;
        }
        let st = grid.lattice().stencil_unchecked(&s.units[i]);
        for (corner, phi) in st.corners.iter().zip(st.weights.iter()) {
            if *phi == 0.0 {
                continue;
            }
            let mut e = [[0.0; 3]; 3];
            for a in 0..3 {
                for c in 0..3 {
                    e[a][c] = phi * local[a][c];
                }
            }
            s.pending.push((*corner, e));
        }
    }
    s.pending.sort_by_key(|(v, _)| *v);
    let mut entries: Vec<(usize, [[f64; 3]; 3])> = Vec::new();
    for (v, e) in s.pending.drain(..) {
        match entries.last_mut() {
            Some((lv, acc)) if *lv == v => {
                for a in 0..3 {
                    for c in 0..3 {
                        acc[a][c] += e[a][c];
                    }
                }
            }
            _ => entries.push((v, e)),
        }
    }
    Ok(RayJacobian { entries, color })
}
