//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's interpolation, compositing or
//! deformation code; only plain data is read out of library types.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raylaplace::{Aabb, Camera, DeformationGrid, Grid, Lattice, Ray, Vec3, VoxelField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cell index and fraction along one axis with `n` vertices. Interior
/// boundaries belong to the cell above; the last cell is closed.
fn cell(u: f64, n: usize) -> (usize, f64) {
    let s = u * (n - 1) as f64;
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

/// Direct 8-term trilinear formula over a flat x-fastest array.
pub fn trilinear(values: &[f64], dims: [usize; 3], u: [f64; 3]) -> f64 {
    let (i, fx) = cell(u[0], dims[0]);
    let (j, fy) = cell(u[1], dims[1]);
    let (k, fz) = cell(u[2], dims[2]);
    let at = |a: usize, b: usize, c: usize| values[a + dims[0] * (b + dims[1] * c)];
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                acc += wx * wy * wz * at(i + dx, j + dy, k + dz);
            }
        }
    }
    acc
}

pub fn density_values(field: &VoxelField) -> Vec<f64> {
    field.raw_density().values().iter().map(|v| v[0] as f64).collect()
}

pub fn color_values(field: &VoxelField, ch: usize) -> Vec<f64> {
    field.raw_color().values().iter().map(|v| v[ch] as f64).collect()
}

/// Density and color at normalized coordinate `u`, straight from the raw
/// grids.
pub fn query_unit(field: &VoxelField, u: [f64; 3]) -> (f64, [f64; 3]) {
    if u.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return (0.0, [0.0; 3]);
    }
    let dims = field.dims();
    let d = softplus(trilinear(&density_values(field), dims, u));
    let c = [0, 1, 2].map(|ch| sigmoid(trilinear(&color_values(field, ch), dims, u)));
    (d, c)
}

pub fn to_unit(b: &Aabb, x: &Vec3) -> [f64; 3] {
    let (lo, hi) = (b.min_corner(), b.max_corner());
    [0, 1, 2].map(|a| (x[a] - lo[a]) / (hi[a] - lo[a]))
}

pub fn query(field: &VoxelField, x: &Vec3) -> (f64, [f64; 3]) {
    query_unit(field, to_unit(field.bounds(), x))
}

/// Emission-absorption compositing written as a product of transmittances.
/// Returns `(rgb blended with bg, weights)`.
pub fn composite(tau: &[f64], col: &[[f64; 3]], delta: &[f64], bg: [f64; 3]) -> ([f64; 3], Vec<f64>) {
    let mut weights = Vec::new();
    let mut rgb = [0.0; 3];
    for i in 0..tau.len() {
        let t: f64 = (0..i).map(|j| (-tau[j] * delta[j]).exp()).product();
        let w = t * (1.0 - (-tau[i] * delta[i]).exp());
        for c in 0..3 {
            rgb[c] += w * col[i][c];
        }
        weights.push(w);
    }
    let opacity: f64 = weights.iter().sum();
    (
        [0, 1, 2].map(|c| rgb[c] + (1.0 - opacity) * bg[c]),
        weights,
    )
}

/// Ray-box interval by brute force over the six planes.
pub fn clip(b: &Aabb, ray: &Ray) -> Option<(f64, f64)> {
    let (lo, hi) = (b.min_corner(), b.max_corner());
    let mut ts = Vec::new();
    for a in 0..3 {
        if ray.direction[a] == 0.0 {
            continue;
        }
        for plane in [lo[a], hi[a]] {
            let t = (plane - ray.origin[a]) / ray.direction[a];
            let p = ray.at(t);
            let on_face = (0..3)
                .filter(|&o| o != a)
                .all(|o| p[o] >= lo[o] - 1e-12 && p[o] <= hi[o] + 1e-12);
            if t >= 0.0 && on_face {
                ts.push(t);
            }
        }
    }
    let inside = (0..3).all(|a| ray.origin[a] >= lo[a] && ray.origin[a] <= hi[a]);
    if inside {
        ts.push(0.0);
    }
    let near = ts.iter().cloned().fold(f64::INFINITY, f64::min).max(ray.near);
    let far = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(ray.far);
    (far > near).then_some((near, far))
}

/// Midpoint samples `(t, delta)` on `[near, far]`.
pub fn midpoints(near: f64, far: f64, n: usize) -> Vec<(f64, f64)> {
    let bin = (far - near) / n as f64;
    (0..n)
        .map(|i| {
            let t = near + (i as f64 + 0.5) * bin;
            let next = if i + 1 < n { near + (i as f64 + 1.5) * bin } else { far };
            (t, next - t)
        })
        .collect()
}

/// Displacement at `u` from a deformation grid's vertex values.
pub fn displacement(grid: &DeformationGrid, u: [f64; 3]) -> [f64; 3] {
    if u.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return [0.0; 3];
    }
    let dims = grid.lattice().dims();
    [0, 1, 2].map(|a| {
        let vals: Vec<f64> = grid.theta().iter().map(|t| t[a]).collect();
        trilinear(&vals, dims, u)
    })
}

/// Color of `ray` through the deformed field, composed from scratch:
/// displace each midpoint sample, query, composite.
pub fn perturbed_color(
    field: &VoxelField,
    grid: &DeformationGrid,
    ray: &Ray,
    samples: usize,
    bg: [f64; 3],
) -> [f64; 3] {
    let Some((near, far)) = clip(field.bounds(), ray) else {
        return bg;
    };
    let mut tau = Vec::new();
    let mut col = Vec::new();
    let mut delta = Vec::new();
    for (t, d) in midpoints(near, far, samples) {
        let u = to_unit(field.bounds(), &ray.at(t));
        let du = displacement(grid, u);
        let (den, c) = query_unit(field, [u[0] + du[0], u[1] + du[1], u[2] + du[2]]);
        tau.push(den);
        col.push(c);
        delta.push(d);
    }
    composite(&tau, &col, &delta, bg).0
}

pub fn random_field(n: usize, bounds: Aabb, seed: u64) -> VoxelField {
    let mut r = rng(seed);
    let lat = Lattice::cubic(n).unwrap();
    let dens: Vec<[f32; 1]> = (0..lat.len()).map(|_| [r.gen_range(-3.0..4.0)]).collect();
    let cols: Vec<[f32; 3]> = (0..lat.len())
        .map(|_| [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)])
        .collect();
    VoxelField::from_grids(
        bounds,
        Grid::from_values(lat, dens).unwrap(),
        Grid::from_values(lat, cols).unwrap(),
    )
    .unwrap()
}

/// A ray from a random point outside the box aimed at a random interior
/// point.
pub fn random_ray(bounds: &Aabb, r: &mut ChaCha8Rng) -> Ray {
    let c = bounds.center();
    let half = 0.5 * bounds.extent().max();
    let dir: Vec3 = loop {
        let v = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.2 && n <= 1.0 {
            break v / n;
        }
    };
    let origin = c + dir * (3.0 * half);
    let target = c + Vec3::new(
        r.gen_range(-0.6..0.6) * half,
        r.gen_range(-0.6..0.6) * half,
        r.gen_range(-0.6..0.6) * half,
    );
    let d = (target - origin).normalize();
    Ray {
        origin,
        direction: d,
        near: 0.0,
        far: f64::INFINITY,
    }
}

/// Pinhole ray by hand: pixel center, intrinsics, rotation columns.
pub fn pinhole_direction(cam: &Camera, px: u32, py: u32) -> Vec3 {
    let [fx, fy, cx, cy] = cam.intrinsics();
    let pose = cam.pose_rows();
    let d = [(px as f64 + 0.5 - cx) / fx, (py as f64 + 0.5 - cy) / fy, 1.0];
    let w = Vec3::new(
        pose[0] * d[0] + pose[1] * d[1] + pose[2] * d[2],
        pose[4] * d[0] + pose[5] * d[1] + pose[6] * d[2],
        pose[8] * d[0] + pose[9] * d[1] + pose[10] * d[2],
    );
    w / w.norm()
}
