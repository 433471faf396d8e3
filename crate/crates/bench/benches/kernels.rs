use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rand::{Rng, SeedableRng};

use raylaplace::uq::{ray_jacobian_sq, sample_batch_rays};
use raylaplace::*;

fn scene() -> (VoxelField, Vec<Camera>) {
    let b = Aabb::cube(1.0);
    let field = make_synthetic_scene(&SceneSpec::preset("two_blob").unwrap(), 64, b).unwrap();
    let cams = rig::upper_hemisphere(&b, 16, 3.0, 0.3, 40.0, 64);
    (field, cams)
}

fn query(c: &mut Criterion) {
    let (field, _) = scene();
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let pts: Vec<Vec3> = (0..4096)
        .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut g = c.benchmark_group("field");
    g.throughput(Throughput::Elements(pts.len() as u64));
    g.bench_function("query", |b| b.iter(|| pts.iter().map(|x| field.query(x).density).sum::<f64>()));
    g.bench_function("query_with_gradient", |b| {
        b.iter(|| pts.iter().map(|x| field.query_with_gradient(x).d_density[0]).sum::<f64>())
    });
    g.finish();
}

fn compositing(c: &mut Criterion) {
    let n = 128;
    let mut rng = rand::rngs::StdRng::seed_from_u64(2);
    let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let col: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let delta = vec![2.0 / n as f64; n];
    let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * delta[0]).collect();
    c.bench_function("composite_128", |b| {
        b.iter(|| composite(black_box(&tau), &col, &delta, &t, [0.0; 3]).unwrap().opacity)
    });
}

fn jacobian(c: &mut Criterion) {
    let (field, cams) = scene();
    let grid = DeformationGrid::zeros(*field.bounds(), 64).unwrap();
    let rays = sample_batch_rays(&cams, 256, 0, 0, true).unwrap();
    let opts = RenderOptions::default();
    let mut g = c.benchmark_group("jacobian");
    g.throughput(Throughput::Elements(rays.len() as u64));
    g.bench_function("ray_jacobian_sq_64_samples", |b| {
        b.iter(|| {
            rays.iter()
                .map(|r| ray_jacobian_sq(&field, &grid, &r.ray, &opts, r.mode).unwrap().entries.len())
                .sum::<usize>()
        })
    });
    g.finish();
}

fn hessian_batch(c: &mut Criterion) {
    let (field, cams) = scene();
    let grid = DeformationGrid::zeros(*field.bounds(), 64).unwrap();
    let rays = sample_batch_rays(&cams, 1024, 0, 0, true).unwrap();
    let opts = RenderOptions::default();
    let mut g = c.benchmark_group("hessian");
    g.sample_size(10);
    g.throughput(Throughput::Elements(rays.len() as u64));
    g.bench_function("accumulate_1024_rays_m64", |b| {
        b.iter_batched(
            || HessianDiagonal::new(&grid, 1e-4 / 64f64.powi(3)).unwrap(),
            |mut h| {
                h.accumulate_rays(&field, &grid, &rays, &opts).unwrap();
                h.ray_count()
            },
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, query, compositing, jacobian, hessian_batch);
criterion_main!(benches);
