use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use raylaplace::eval::{self, EvalReport};
use raylaplace::io::{self, FloatPlane, SceneBundle};
use raylaplace::{
    estimate_uncertainty, fit_field, render_channels, Camera, ChannelImage, RenderOptions,
    UncertaintyField, VoxelField,
};

use crate::args::*;
use crate::{create_dir, echo_path, input_path, output_path, synth, write_echo, CliError};

fn load_field(path: &Path) -> Result<VoxelField, CliError> {
    Ok(io::load_field(&input_path(path)?)?)
}

fn load_uncertainty(path: &Path) -> Result<UncertaintyField, CliError> {
    Ok(io::load_uncertainty(&input_path(path)?)?)
}

/// Test split, or the training split when the scene has no test views.
fn eval_indices(bundle: &SceneBundle) -> Vec<usize> {
    if bundle.split.test.is_empty() {
        bundle.split.train.clone()
    } else {
        bundle.split.test.clone()
    }
}

pub fn synth(mut a: SynthArgs) -> Result<(), CliError> {
    a.out = output_path(&a.out)?;
    let scene = synth::build(&a)?;
    create_dir(&a.out.join("images"))?;
    let mut files = Vec::with_capacity(scene.cameras.len());
    for (i, img) in scene.images.iter().enumerate() {
        let name = format!("images/view_{i:03}.png");
        io::save_png(&a.out.join(&name), img)?;
        files.push(name);
    }
    io::save_field(&a.out.join("gt.vxf"), &scene.ground_truth)?;
    if let Some(init) = &scene.init {
        io::save_field(&a.out.join("init.vxf"), init)?;
    }
    let bundle = SceneBundle {
        root: a.out.clone(),
        aabb: scene.aabb,
        cameras: scene.cameras,
        files,
        split: scene.split,
    };
    io::save_scene(&a.out.join("scene.json"), &bundle)?;
    write_echo(&a.out.join("config.json"), "synth", &a)?;
    println!(
        "synth: {} with {} train / {} test views -> {}",
        a.scene,
        bundle.split.train.len(),
        bundle.split.test.len(),
        a.out.display()
    );
    Ok(())
}

pub fn train(mut a: TrainArgs) -> Result<(), CliError> {
    a.scene = input_path(&a.scene)?;
    a.init = a.init.as_deref().map(input_path).transpose()?;
    a.out = output_path(&a.out)?;
    let bundle = io::load_scene(&a.scene)?;
    let cameras = bundle.train_cameras();
    let images = bundle.load_images(&bundle.split.train)?;
    let init = match &a.init {
        Some(p) => io::load_field(p)?,
        None => VoxelField::constant(bundle.aabb, [a.resolution; 3], a.init_density, [0.0; 3])?,
    };
    let start = Instant::now();
    let out = fit_field(&images, &cameras, &init, &a.train.config())?;
    io::save_field(&a.out, &out.field)?;
    write_echo(&echo_path(&a.out), "train", &a)?;
    println!(
        "train: {} iterations, final loss {:.6}, wall-clock {:.2} s",
        a.train.iterations,
        out.loss_history.last().copied().unwrap_or(f64::NAN),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn uq(mut a: UqArgs) -> Result<(), CliError> {
    a.field = input_path(&a.field)?;
    a.scene = input_path(&a.scene)?;
    a.out = output_path(&a.out)?;
    let field = io::load_field(&a.field)?;
    let bundle = io::load_scene(&a.scene)?;
    let cfg = a.uq.config();
    let run = estimate_uncertainty(&field, &bundle.train_cameras(), &cfg)?;
    io::save_uncertainty(&a.out, &run.field)?;
    write_echo(&echo_path(&a.out), "uq", &a)?;
    let (lo, hi) = run.field.log_sigma_range();
    println!(
        "uq: R = {} rays, M = {}, lambda = {:e}, ln sigma in [{lo:.4}, {hi:.4}], wall-clock {:.2} s",
        run.hessian.ray_count(),
        cfg.resolution,
        cfg.lambda(),
        run.elapsed.as_secs_f64()
    );
    Ok(())
}

/// Parses 12 comma-separated floats.
pub fn parse_pose(s: &str) -> Result<[f64; 12], String> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("pose value {v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let pose: [f64; 12] = vals
        .as_slice()
        .try_into()
        .map_err(|_| format!("pose needs 12 values, got {}", vals.len()))?;
    if pose.iter().any(|v| !v.is_finite()) {
        return Err("pose values must be finite".into());
    }
    Ok(pose)
}

/// Pinhole camera with the principal point at the image center.
pub fn camera_from_pose(pose: &[f64; 12], fx: f64, fy: f64, w: u32, h: u32) -> Result<Camera, CliError> {
    Ok(Camera::from_pose_rows(
        pose,
        [fx, fy, w as f64 / 2.0, h as f64 / 2.0],
        w,
        h,
    )?)
}

fn render_camera(a: &RenderArgs) -> Result<Camera, CliError> {
    if let (Some(scene), Some(i)) = (&a.scene, a.camera) {
        let bundle = io::load_scene(scene)?;
        return bundle.cameras.get(i).cloned().ok_or_else(|| {
            CliError::Config(format!("camera {i} out of range ({} cameras)", bundle.cameras.len()))
        });
    }
    let Some(pose) = &a.pose else {
        return Err(CliError::Config("give --scene with --camera, or --pose".into()));
    };
    let pose = parse_pose(pose).map_err(CliError::Config)?;
    let need = |v: Option<f64>, n: &str| v.ok_or_else(|| CliError::Config(format!("--pose needs --{n}")));
    let fx = need(a.fx, "fx")?;
    let fy = need(a.fy, "fy")?;
    let w = a.width.ok_or_else(|| CliError::Config("--pose needs --width".into()))?;
    let h = a.height.ok_or_else(|| CliError::Config("--pose needs --height".into()))?;
    camera_from_pose(&pose, fx, fy, w, h)
}

/// Encoded bytes of one channel. `base` is the unthresholded render (with
/// uncertainty when available), `filtered` the thresholded one.
pub fn encode_channel(channel: Channel, base: &ChannelImage, filtered: Option<&ChannelImage>) -> Vec<u8> {
    match channel {
        Channel::Rgb => io::encode_png_rgb(base.width, base.height, &base.rgb),
        Channel::Filtered => {
            let img = filtered.expect("filtered render requested");
            io::encode_png_rgb(img.width, img.height, &img.rgb)
        }
        Channel::Unc => io::encode_png_colormap(base.width, base.height, &base.normalized_log_uncertainty()),
        Channel::Depth => io::encode_plane(&FloatPlane::single(base.width, base.height, &base.depth)),
    }
}

pub fn render(mut a: RenderArgs) -> Result<(), CliError> {
    a.field = input_path(&a.field)?;
    a.uncertainty = a.uncertainty.as_deref().map(input_path).transpose()?;
    a.scene = a.scene.as_deref().map(input_path).transpose()?;
    a.out = output_path(&a.out)?;
    let needs_unc = a.channels.iter().any(|c| matches!(c, Channel::Unc | Channel::Filtered));
    if needs_unc && a.uncertainty.is_none() {
        return Err(CliError::Config("unc and filtered channels need --uncertainty".into()));
    }
    if a.channels.contains(&Channel::Filtered) && a.threshold.is_none() {
        return Err(CliError::Config("the filtered channel needs --threshold".into()));
    }
    if a.threshold.is_some_and(f64::is_nan) {
        return Err(CliError::Config("--threshold is NaN".into()));
    }
    let field = io::load_field(&a.field)?;
    let uf = a.uncertainty.as_deref().map(io::load_uncertainty).transpose()?;
    let cam = render_camera(&a)?;
    let base = render_channels(&field, &cam, &a.render.options(None), uf.as_ref())?;
    let filtered = match (a.threshold, a.channels.contains(&Channel::Filtered)) {
        (Some(k), true) => Some(render_channels(&field, &cam, &a.render.options(Some(k)), uf.as_ref())?),
        _ => None,
    };
    create_dir(&a.out)?;
    for &ch in &a.channels {
        let path = a.out.join(ch.file_name());
        io::atomic_write(&path, &encode_channel(ch, &base, filtered.as_ref()))?;
        println!("render: {}", path.display());
    }
    write_echo(&a.out.join("render.config.json"), "render", &a)?;
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn eval(mut a: EvalArgs) -> Result<(), CliError> {
    a.scene = input_path(&a.scene)?;
    a.field = input_path(&a.field)?;
    a.uncertainty = a.uncertainty.as_deref().map(input_path).transpose()?;
    a.reference = a.reference.as_deref().map(input_path).transpose()?;
    a.report = output_path(&a.report)?;
    if a.threshold.is_some() && a.uncertainty.is_none() {
        return Err(CliError::Config("--threshold needs --uncertainty".into()));
    }
    let bundle = io::load_scene(&a.scene)?;
    let field = io::load_field(&a.field)?;
    let uf = a.uncertainty.as_deref().map(io::load_uncertainty).transpose()?;
    let idx = eval_indices(&bundle);
    let cams: Vec<Camera> = idx.iter().map(|&i| bundle.cameras[i].clone()).collect();
    let images = bundle.load_images(&idx)?;
    let opts = a.render.options(None);

    let mut psnrs = Vec::new();
    for (cam, img) in cams.iter().zip(&images) {
        let r = render_channels(&field, cam, &opts, None)?;
        psnrs.push(eval::psnr(&r.rgb, &img.pixels)?);
    }
    let mut report = EvalReport {
        psnr: Some(mean(&psnrs)),
        ..EvalReport::default()
    };
    if let (Some(k), Some(uf)) = (a.threshold, &uf) {
        let mut cov = Vec::new();
        for cam in &cams {
            cov.push(eval::coverage(&render_channels(&field, cam, &opts.with_threshold(Some(k)), Some(uf))?)?);
        }
        report.coverage = Some(mean(&cov));
    }
    if let (Some(refp), Some(uf)) = (&a.reference, &uf) {
        let reference = io::load_field(refp)?;
        let du = eval::depth_uncertainty(&reference, &field, uf, &cams, &opts)?;
        let curves = eval::sparsification(&du.errors, &du.scores, a.step)?;
        report.ause = Some(curves.ause);
        report.curves = Some(curves);
    }
    io::atomic_write(&a.report, report.to_json().as_bytes())?;
    write_echo(&echo_path(&a.report), "eval", &a)?;
    print!("{}", report.to_key_value());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub coverage: f64,
    pub psnr: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    /// Mean PSNR of the unthresholded renders.
    pub baseline_psnr: f64,
    pub views: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

pub fn sweep(mut a: SweepArgs) -> Result<(), CliError> {
    a.scene = input_path(&a.scene)?;
    a.field = input_path(&a.field)?;
    a.uncertainty = input_path(&a.uncertainty)?;
    a.out = output_path(&a.out)?;
    if a.thresholds.is_empty() || a.thresholds.iter().any(|k| k.is_nan()) {
        return Err(CliError::Config("--thresholds must be a non-empty list of numbers".into()));
    }
    let bundle = io::load_scene(&a.scene)?;
    let field = load_field(&a.field)?;
    let uf = load_uncertainty(&a.uncertainty)?;
    let idx = eval_indices(&bundle);
    let images = bundle.load_images(&idx)?;
    create_dir(&a.out)?;

    let score = |k: Option<f64>| -> Result<(Vec<ChannelImage>, f64, f64), CliError> {
        let opts: RenderOptions = a.render.options(k);
        let mut renders = Vec::new();
        let (mut p, mut c) = (Vec::new(), Vec::new());
        for (&i, img) in idx.iter().zip(&images) {
            let r = render_channels(&field, &bundle.cameras[i], &opts, Some(&uf))?;
            p.push(eval::psnr(&r.rgb, &img.pixels)?);
            c.push(eval::coverage(&r)?);
            renders.push(r);
        }
        Ok((renders, mean(&p), mean(&c)))
    };

    let (_, baseline_psnr, _) = score(None)?;
    println!("sweep: {} views, baseline psnr {baseline_psnr:.3}", idx.len());
    println!("threshold coverage psnr");
    let mut rows = Vec::new();
    for &k in &a.thresholds {
        let (renders, psnr, coverage) = score(Some(k))?;
        for (&i, r) in idx.iter().zip(&renders) {
            let path = a.out.join(format!("k{k:.3}_view{i:03}.png"));
            io::atomic_write(&path, &io::encode_png_rgb(r.width, r.height, &r.rgb))?;
        }
        println!("{k:.3} {coverage:.4} {psnr:.3}");
        rows.push(SweepRow {
            threshold: k,
            coverage,
            psnr,
        });
    }
    let report = SweepReport {
        baseline_psnr,
        views: idx,
        rows,
    };
    let text = serde_json::to_string_pretty(&report).expect("sweep report serializes");
    io::atomic_write(&a.out.join("sweep.json"), text.as_bytes())?;
    write_echo(&a.out.join("sweep.config.json"), "sweep", &a)?;
    Ok(())
}
