mod common;

use proptest::prelude::*;
use rand::Rng;
use raylaplace::uq::{
    perturbed_query, ray_jacobian_sq, render_perturbed_ray, sample_batch_rays, DeformationGrid,
    HessianDiagonal,
};
use raylaplace::*;

fn cell_center_example() {
    let b = Aabb::new([0.0; 3], [2.0; 3]).unwrap();
    let mut g = DeformationGrid::zeros(b, 3).unwrap();
    g.set_vertex(g.lattice().index(1, 1, 1), [1.0, 0.0, 0.0]);
    let d = g.deform(&Vec3::new(1.5, 1.5, 1.5));
    assert_eq!(d, [0.125, 0.0, 0.0]);
}

#[test]
fn deform_examples() {
    cell_center_example();
    let b = Aabb::cube(1.0);
    let mut g = DeformationGrid::zeros(b, 4).unwrap();
    let v = g.lattice().index(2, 0, 3);
    g.set_vertex(v, [0.1, 0.2, -0.3]);
    let x = b.from_unit(&g.lattice().vertex_position(v));
    assert_eq!(g.deform(&x), [0.1, 0.2, -0.3]);
}

#[test]
fn perturbed_query_matches_compose_then_query() {
    let b = Aabb::new([-1.0, 0.0, 0.0], [1.0, 1.0, 2.0]).unwrap();
    let field = common::random_field(6, b, 21);
    let mut r = common::rng(22);
    for m in [2, 3, 5] {
        let mut g = DeformationGrid::zeros(b, m).unwrap();
        for k in 0..g.param_count() {
            g.set_param(k, r.gen_range(-0.05..0.05));
        }
        for _ in 0..50 {
            let u = [r.gen::<f64>(), r.gen(), r.gen()];
            let x = b.from_unit(&Vec3::from(u));
            let du = common::displacement(&g, u);
            let (d, c) = common::query_unit(&field, [u[0] + du[0], u[1] + du[1], u[2] + du[2]]);
            let q = perturbed_query(&field, &g, &x);
            assert!((q.density - d).abs() <= 1e-12 * d.max(1.0));
            for ch in 0..3 {
                assert!((q.color[ch] - c[ch]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn zero_theta_perturbed_query_is_bit_identical() {
    let b = Aabb::cube(1.0);
    let field = common::random_field(5, b, 1);
    let g = DeformationGrid::zeros(b, 7).unwrap();
    let mut r = common::rng(2);
    for _ in 0..500 {
        let x = Vec3::new(r.gen_range(-1.2..1.2), r.gen_range(-1.2..1.2), r.gen_range(-1.2..1.2));
        assert_eq!(perturbed_query(&field, &g, &x), field.query(&x));
    }
}

#[test]
fn uniform_shift_equals_shifted_query() {
    let b = Aabb::new([0.0; 3], [1.0; 3]).unwrap();
    let field = common::random_field(5, b, 4);
    let mut g = DeformationGrid::zeros(b, 3).unwrap();
    for v in 0..g.lattice().len() {
        g.set_vertex(v, [0.04, 0.0, 0.0]);
    }
    let mut r = common::rng(5);
    for _ in 0..50 {
        let x = Vec3::new(r.gen_range(0.0..0.9), r.gen(), r.gen());
        let a = perturbed_query(&field, &g, &x);
        let s = field.query(&(x + Vec3::new(0.04, 0.0, 0.0)));
        assert!((a.density - s.density).abs() < 1e-9 * s.density.max(1.0));
    }
}

/// M=2, one ray, two samples: every squared entry against central
/// differences of the independent perturbed renderer.
#[test]
fn tiny_instance_matches_finite_differences() {
    let b = Aabb::cube(1.0);
    let mut r = common::rng(9);
    let mut done = 0;
    while done < 10 {
        let field = common::random_field(3, b, 100 + done);
        let ray = common::random_ray(&b, &mut r);
        let Some((near, far)) = common::clip(&b, &ray) else { continue };
        let interior = common::midpoints(near, far, 2).iter().all(|(t, _)| {
            let u = common::to_unit(&b, &ray.at(*t));
            u.iter().all(|x| (x - 0.5).abs() > 1e-3)
        });
        if !interior {
            continue;
        }
        let g = DeformationGrid::zeros(b, 2).unwrap();
        let opts = RenderOptions { samples_per_ray: 2, ..RenderOptions::default() };
        let sq = ray_jacobian_sq(&field, &g, &ray, &opts, SampleMode::Midpoint).unwrap();
        let h = 1e-4;
        for k in 0..g.param_count() {
            let mut p = g.clone();
            p.set_param(k, h);
            let mut m = g.clone();
            m.set_param(k, -h);
            let cp = common::perturbed_color(&field, &p, &ray, 2, [0.0; 3]);
            let cm = common::perturbed_color(&field, &m, &ray, 2, [0.0; 3]);
            let fd: f64 = (0..3).map(|c| ((cp[c] - cm[c]) / (2.0 * h)).powi(2)).sum();
            let a = sq.entries.iter().find(|e| e.0 == k).map_or(0.0, |e| e.1);
            assert!((a - fd).abs() <= 1e-3 * fd.max(1e-8), "k={k}: {a} vs {fd}");
        }
        done += 1;
    }
}

#[test]
fn empty_space_gives_empty_map() {
    let b = Aabb::cube(1.0);
    let field = VoxelField::constant(b, [4; 3], scene::EMPTY_RAW_DENSITY, [0.0; 3]).unwrap();
    let g = DeformationGrid::zeros(b, 4).unwrap();
    let mut r = common::rng(0);
    for _ in 0..20 {
        let ray = common::random_ray(&b, &mut r);
        let sq = ray_jacobian_sq(&field, &g, &ray, &RenderOptions::default(), SampleMode::Midpoint).unwrap();
        assert!(sq.entries.iter().all(|e| e.1 == 0.0));
    }
}

/// A field symmetric under x -> -x and a ray in the mirror plane: the map
/// is invariant under the mirror permutation of vertex indices.
#[test]
fn mirror_symmetric_instance_gives_symmetric_map() {
    let b = Aabb::cube(1.0);
    let n = 6;
    let lat = Lattice::cubic(n).unwrap();
    let mut r = common::rng(17);
    let mut dens = vec![[0.0f32]; lat.len()];
    let mut cols = vec![[0.0f32; 3]; lat.len()];
    for v in 0..lat.len() {
        let [i, j, k] = lat.coords(v);
        if i <= n - 1 - i {
            let d = [r.gen_range(-2.0f32..3.0)];
            let c = [r.gen_range(-2.0f32..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)];
            for ii in [i, n - 1 - i] {
                let w = lat.index(ii, j, k);
                dens[w] = d;
                cols[w] = c;
            }
        }
    }
    let field = VoxelField::from_grids(b, Grid::from_values(lat, dens).unwrap(), Grid::from_values(lat, cols).unwrap()).unwrap();
    let m = 4;
    let g = DeformationGrid::zeros(b, m).unwrap();
    let ray = Ray {
        origin: Vec3::new(0.0, -2.0, -0.37),
        direction: Vec3::new(0.0, 1.0, 0.21).normalize(),
        near: 0.0,
        far: f64::INFINITY,
    };
    let opts = RenderOptions { samples_per_ray: 16, ..RenderOptions::default() };
    let sq = ray_jacobian_sq(&field, &g, &ray, &opts, SampleMode::Midpoint).unwrap();
    let map: std::collections::HashMap<usize, f64> = sq.entries.iter().copied().collect();
    assert!(!map.is_empty());
    let glat = g.lattice();
    for (&k, &val) in &map {
        let (v, a) = (k / 3, k % 3);
        let [i, j, kk] = glat.coords(v);
        let mirror = 3 * glat.index(m - 1 - i, j, kk) + a;
        assert_eq!(map.get(&mirror).copied().unwrap_or(0.0), val, "param {k} vs {mirror}");
    }
}

fn sphere_fixture() -> (VoxelField, Vec<Camera>) {
    let b = Aabb::cube(1.0);
    let field = make_synthetic_scene(&SceneSpec::preset("sphere").unwrap(), 16, b).unwrap();
    (field, rig::ring(&b, 4, 3.0, 0.3, 0.2, 40.0, 16))
}

#[test]
fn accumulators_are_sparse_and_bounded_below() {
    let (field, cams) = sphere_fixture();
    let b = *field.bounds();
    let m = 8;
    let g = DeformationGrid::zeros(b, m).unwrap();
    let opts = RenderOptions { samples_per_ray: 24, ..RenderOptions::default() };
    let rays = sample_batch_rays(&cams, 300, 3, 0, false).unwrap();
    let mut h = HessianDiagonal::new(&g, 1e-5).unwrap();
    h.accumulate_rays(&field, &g, &rays, &opts).unwrap();
    // vertices of cells holding at least one sample
    let mut touched = vec![false; g.lattice().len()];
    for r in &rays {
        let Some(c) = r.ray.clipped_to(&b) else { continue };
        for x in sample_stratified(&c, 24, r.mode).points {
            let st = g.lattice().stencil_unchecked(&b.to_unit(&x));
            for v in st.corners {
                touched[v] = true;
            }
        }
    }
    for (v, acc) in h.accum().iter().enumerate() {
        for a in 0..3 {
            assert!(acc[a] >= 0.0);
            if acc[a] > 0.0 {
                assert!(touched[v], "vertex {v} has mass but no sample nearby");
            }
            let d = h.diagonal(3 * v + a);
            assert!(d >= 2.0 * h.lambda());
            if !touched[v] {
                assert_eq!(d, 2.0 * h.lambda());
            }
        }
    }
}

/// With a constant color `c` the ray Jacobian is proportional to
/// `c - background`, so pulling every color toward a gray background by a
/// factor `s` scales the accumulators by `s^2`.
#[test]
fn graying_colors_shrinks_jacobians_but_never_below_zero() {
    let (field, cams) = sphere_fixture();
    let b = *field.bounds();
    let g = DeformationGrid::zeros(b, 5).unwrap();
    let gray = [0.5; 3];
    let opts = RenderOptions { samples_per_ray: 24, background: gray, ..RenderOptions::default() };
    let rays = sample_batch_rays(&cams, 200, 8, 0, false).unwrap();
    let base = [0.9, 0.2, 0.6];
    let accum = |s: f64| {
        let mut f = field.clone();
        let c: [f32; 3] = std::array::from_fn(|k| raylaplace::field::logit(0.5 + s * (base[k] - 0.5)) as f32);
        for v in f.raw_color_mut().values_mut() {
            *v = c;
        }
        let mut h = HessianDiagonal::new(&g, 1e-5).unwrap();
        h.accumulate_rays(&f, &g, &rays, &opts).unwrap();
        h.accum().to_vec()
    };
    let full = accum(1.0);
    assert!(full.iter().flatten().any(|v| *v > 0.0));
    for s in [0.5, 0.1, 0.0] {
        let scaled = accum(s);
        for (a, f) in scaled.iter().flatten().zip(full.iter().flatten()) {
            assert!(*a >= 0.0);
            assert!((a - s * s * f).abs() <= 1e-6 * f + 1e-12, "{a} vs {}", s * s * f);
        }
    }
}

/// sigma from the library against Eq.-19 evaluated on a second-difference
/// Hessian of the ray objective.
#[test]
fn sigma_matches_finite_difference_hessian() {
    let (field, cams) = sphere_fixture();
    let b = *field.bounds();
    let cfg = UqConfig {
        resolution: 4,
        batches: 1,
        rays_per_batch: 256,
        samples_per_ray: 24,
        jitter: false,
        seed: 1,
        ..UqConfig::default()
    };
    let g = DeformationGrid::zeros(b, 4).unwrap();
    let h = accumulate_hessian_diag(&field, &g, &cams, &cfg).unwrap();
    let uf = compute_uncertainty_field(&h);
    let rays = sample_batch_rays(&cams, 256, 1, 0, false).unwrap();
    let opts = cfg.render_options();
    let base: Vec<[f64; 3]> = rays.iter().map(|r| render_perturbed_ray(&field, &g, &r.ray, &opts, r.mode)).collect();
    let lambda = cfg.lambda();
    let obj = |gg: &DeformationGrid| {
        let data: f64 = rays
            .iter()
            .zip(&base)
            .map(|(r, c)| {
                let p = render_perturbed_ray(&field, gg, &r.ray, &opts, r.mode);
                (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>()
            })
            .sum();
        data / rays.len() as f64 + lambda * gg.theta().iter().flatten().map(|t| t * t).sum::<f64>()
    };
    let eps = 1e-6;
    for v in 0..g.lattice().len() {
        let mut s2 = 0.0;
        for a in 0..3 {
            let mut p = g.clone();
            p.set_param(3 * v + a, eps);
            let hp = obj(&p);
            p.set_param(3 * v + a, -eps);
            let hm = obj(&p);
            s2 += 1.0 / ((hp + hm) / (eps * eps));
        }
        let fd_sigma = s2.sqrt();
        let s = uf.vertex_sigma(v) as f64;
        assert!((s - fd_sigma).abs() <= 1e-2 * fd_sigma, "vertex {v}: {s} vs {fd_sigma}");
    }
}

#[test]
fn prior_only_field_and_monotonicity() {
    let g = DeformationGrid::zeros(Aabb::cube(1.0), 3).unwrap();
    let lambda = 1e-4 / 27.0;
    let h = HessianDiagonal::new(&g, lambda).unwrap();
    let uf = compute_uncertainty_field(&h);
    let expected = 3f64.sqrt() * (2.0 * lambda).powf(-0.5);
    for s in uf.sigma() {
        assert!((s as f64 - expected).abs() <= expected * f32::EPSILON as f64);
    }
    // more information at one vertex lowers its sigma only
    let mut h2 = h.clone();
    let jac = uq::SquaredJacobian { entries: vec![(3 * 5 + 1, 0.3)] };
    h2.add_ray(&jac);
    let uf2 = compute_uncertainty_field(&h2);
    assert!(uf2.vertex_sigma(5) < uf.vertex_sigma(5));
    assert_eq!(uf2.vertex_sigma(4), uf.vertex_sigma(4));
}

#[test]
fn uncertainty_lookup_matches_trilinear_oracle() {
    let b = Aabb::new([0.0, 0.0, 0.0], [2.0, 1.0, 1.0]).unwrap();
    let lat = Lattice::cubic(5).unwrap();
    let mut r = common::rng(44);
    let sigma: Vec<f32> = (0..lat.len()).map(|_| r.gen_range(0.1f32..10.0)).collect();
    let axes = sigma.iter().map(|s| [s / 3f32.sqrt(); 3]).collect();
    let uf = UncertaintyField::from_parts(b, lat, axes, sigma.clone(), None).unwrap();
    let flat: Vec<f64> = sigma.iter().map(|s| *s as f64).collect();
    for v in 0..lat.len() {
        let x = b.from_unit(&lat.vertex_position(v));
        assert_eq!(uf.uncertainty_at(&x), sigma[v] as f64);
    }
    for _ in 0..100 {
        let u = [r.gen::<f64>(), r.gen(), r.gen()];
        let x = b.from_unit(&Vec3::from(u));
        assert!((uf.uncertainty_at(&x) - common::trilinear(&flat, [5; 3], u)).abs() < 1e-12);
    }
    let max = flat.iter().cloned().fold(0.0, f64::max);
    assert_eq!(uf.uncertainty_at(&Vec3::new(-0.5, 0.5, 0.5)), max);
}

/// One-sided cameras leave the back of the sphere less constrained.
#[test]
fn unobserved_side_is_more_uncertain() {
    let b = Aabb::cube(1.0);
    let field = make_synthetic_scene(&SceneSpec::preset("sphere").unwrap(), 24, b).unwrap();
    let cams = rig::upper_hemisphere(&b, 10, 3.0, 0.25, 40.0, 24);
    let cfg = UqConfig { resolution: 12, batches: 4, rays_per_batch: 1024, samples_per_ray: 48, ..UqConfig::default() };
    let uf = estimate_uncertainty(&field, &cams, &cfg).unwrap().field;
    let lat = uf.lattice();
    let shell = 0.5 / 11.0;
    let c = Vec3::new(0.5, 0.5, 0.5);
    let (mut back, mut nb, mut front, mut nf) = (0.0, 0, 0.0, 0);
    for v in 0..lat.len() {
        let u = lat.vertex_position(v);
        if ((u - c).norm() - 0.3).abs() > shell {
            continue;
        }
        if u[2] < 0.5 {
            back += uf.vertex_sigma(v) as f64;
            nb += 1;
        } else if u[2] > 0.5 {
            front += uf.vertex_sigma(v) as f64;
            nf += 1;
        }
    }
    assert!(back / nb as f64 > front / nf as f64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn perturbed_render_at_mode_is_exact(seed in any::<u64>(), m in 2usize..6) {
        let b = Aabb::cube(1.0);
        let field = common::random_field(4, b, seed);
        let g = DeformationGrid::zeros(b, m).unwrap();
        let mut r = common::rng(seed ^ 1);
        let opts = RenderOptions { samples_per_ray: 16, ..RenderOptions::default() };
        for _ in 0..8 {
            let ray = common::random_ray(&b, &mut r);
            let a = render_perturbed_ray(&field, &g, &ray, &opts, SampleMode::Midpoint);
            let c = render_ray(&field, &ray, &opts, SampleMode::Midpoint, None).unwrap().rgb;
            prop_assert_eq!(a, c);
        }
    }

    #[test]
    fn accumulation_is_additive(seed in any::<u64>(), na in 1usize..30, nb in 1usize..30) {
        let (field, cams) = sphere_fixture();
        let g = DeformationGrid::zeros(*field.bounds(), 4).unwrap();
        let opts = RenderOptions { samples_per_ray: 8, ..RenderOptions::default() };
        let a = sample_batch_rays(&cams, na, seed, 0, true).unwrap();
        let bb = sample_batch_rays(&cams, nb, seed, 1, true).unwrap();
        let mut split = HessianDiagonal::new(&g, 1e-4).unwrap();
        split.accumulate_rays(&field, &g, &a, &opts).unwrap();
        split.accumulate_rays(&field, &g, &bb, &opts).unwrap();
        let mut joined = HessianDiagonal::new(&g, 1e-4).unwrap();
        let all: Vec<_> = a.iter().chain(&bb).copied().collect();
        joined.accumulate_rays(&field, &g, &all, &opts).unwrap();
        prop_assert_eq!(split.ray_count(), (na + nb) as u64);
        prop_assert_eq!(split, joined);
    }
}
