//! Synthetic scene bundles.
//!
//! Ordinary presets render training views from the upper hemisphere and
//! test views from a ring below the equator. `floater` pairs a sphere ground
//! truth with an initial field that carries an extra blob: only candidate
//! views where the blob changes no pixel are kept for training, and the views
//! where it covers the most pixels become the test split. Training from that
//! init cannot see, and so cannot remove, the blob.

use raylaplace::io::Split;
use raylaplace::{
    make_synthetic_scene, render_images, rig, Aabb, Camera, ImageRgb, RenderOptions, SceneSpec,
    VoxelField,
};

use crate::args::SynthArgs;
use crate::CliError;

/// Elevation of the test ring, radians.
pub const TEST_ELEVATION: f64 = -0.35;

pub struct SyntheticScene {
    pub aabb: Aabb,
    pub ground_truth: VoxelField,
    /// Initial field for training, when the scene prescribes one.
    pub init: Option<VoxelField>,
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageRgb>,
    pub split: Split,
}

pub fn build(args: &SynthArgs) -> Result<SyntheticScene, CliError> {
    if args.views == 0 {
        return Err(CliError::Config("--views must be >= 1".into()));
    }
    let aabb = Aabb::cube(args.half_extent);
    let opts = RenderOptions {
        samples_per_ray: args.samples_per_ray,
        ..RenderOptions::default()
    };
    if args.scene == "floater" {
        return floater(args, aabb, &opts);
    }
    let spec = SceneSpec::preset(&args.scene)?;
    let gt = make_synthetic_scene(&spec, args.resolution, aabb)?;
    let mut cameras = rig::upper_hemisphere(
        &aabb,
        args.views,
        args.radius,
        args.min_elevation,
        args.fov,
        args.image_size,
    );
    cameras.extend(rig::ring(
        &aabb,
        args.test_views,
        args.radius,
        TEST_ELEVATION,
        0.3,
        args.fov,
        args.image_size,
    ));
    let images = render_images(&gt, &cameras, &opts)?;
    let split = Split {
        train: (0..args.views).collect(),
        test: (args.views..args.views + args.test_views).collect(),
    };
    Ok(SyntheticScene {
        aabb,
        ground_truth: gt,
        init: None,
        cameras,
        images,
        split,
    })
}

fn floater(args: &SynthArgs, aabb: Aabb, opts: &RenderOptions) -> Result<SyntheticScene, CliError> {
    let gt = make_synthetic_scene(&SceneSpec::preset("sphere")?, args.resolution, aabb)?;
    let init = make_synthetic_scene(&SceneSpec::preset("floater")?, args.resolution, aabb)?;
    let candidates = rig::full_sphere(&aabb, args.views, args.radius, args.fov, args.image_size);
    let clean = render_images(&gt, &candidates, opts)?;
    let dirty = render_images(&init, &candidates, opts)?;

    let mut train = Vec::new();
    let mut seen = Vec::new();
    for (i, (c, d)) in clean.iter().zip(&dirty).enumerate() {
        let touched = c
            .pixels
            .iter()
            .zip(&d.pixels)
            .filter(|(p, q)| (0..3).any(|k| (p[k] - q[k]).abs() > 1e-6))
            .count();
        if touched == 0 {
            train.push(i);
        } else {
            seen.push((touched, i));
        }
    }
    if train.is_empty() {
        return Err(CliError::Config("every candidate view sees the floater".into()));
    }
    // most-affected first, ties by index
    seen.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut test: Vec<usize> = seen.iter().take(args.test_views).map(|s| s.1).collect();
    test.sort_unstable();
    Ok(SyntheticScene {
        aabb,
        ground_truth: gt,
        init: Some(init),
        cameras: candidates,
        images: clean,
        split: Split { train, test },
    })
}
