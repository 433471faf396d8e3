//! Photometric fitting of a voxel field to posed images with Adam.
//!
//! The loss is the mean squared error over sampled rays and RGB channels.
//! Gradients flow through the compositing weights and the activations back
//! onto the eight raw-grid vertices of every sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{generate_ray, Camera, PixelSampler, Ray};
use crate::error::FieldError;
use crate::field::{sigmoid, softplus, VoxelField};
use crate::render::{
    mix_seed, render_channels, sample_stratified_into, ImageRgb, RaySamples, RenderOptions,
    SampleMode,
};

/// Rays per parallel work unit. Fixed so the reduction order, and therefore
/// the result, does not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_rays: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub samples_per_ray: usize,
    /// Jitter sample positions within their bins.
    pub jitter: bool,
    pub background: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 0.1,
            batch_rays: 4096,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            samples_per_ray: 64,
            jitter: true,
            background: [0.0; 3],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: String| Err(FieldError::InvalidConfig(m));
        if self.batch_rays == 0 {
            return bad("batch_rays must be >= 1".into());
        }
        if self.samples_per_ray == 0 {
            return bad("samples_per_ray must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0,1), got ({}, {})", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        Ok(())
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            samples_per_ray: self.samples_per_ray,
            background: self.background,
            ..RenderOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field: VoxelField,
    /// Mean batch loss before each update.
    pub loss_history: Vec<f64>,
}

/// Renders one RGB image per camera in deterministic midpoint mode.
pub fn render_images(
    field: &VoxelField,
    cameras: &[Camera],
    options: &RenderOptions,
) -> Result<Vec<ImageRgb>, crate::error::RenderError> {
    cameras
        .iter()
        .map(|c| render_channels(field, c, options, None).map(|img| ImageRgb::from(&img)))
        .collect()
}

/// Fits the raw grids of `init` to `images` seen from `cameras`.
pub fn fit_field(
    images: &[ImageRgb],
    cameras: &[Camera],
    init: &VoxelField,
    config: &TrainConfig,
) -> Result<TrainOutcome, FieldError> {
    if images.is_empty() || cameras.is_empty() {
        return Err(FieldError::EmptyImageSet);
    }
    if images.len() != cameras.len() {
        return Err(FieldError::DimensionMismatch(format!(
            "{} images for {} cameras",
            images.len(),
            cameras.len()
        )));
    }
    for (i, (img, cam)) in images.iter().zip(cameras).enumerate() {
        if img.width != cam.width
            || img.height != cam.height
            || img.pixels.len() != cam.pixel_count()
        {
            return Err(FieldError::DimensionMismatch(format!(
                "image {i} is {}x{} but its camera is {}x{}",
                img.width, img.height, cam.width, cam.height
            )));
        }
    }
    config.validate()?;

    let mut field = init.clone();
    let mut history = Vec::with_capacity(config.iterations);
    if config.iterations == 0 {
        return Ok(TrainOutcome {
            field,
            loss_history: history,
        });
    }

    let sampler = PixelSampler::new(cameras);
    let n_vertices = field.lattice().len();
    let mut adam = Adam::new(4 * n_vertices);
    let mut grad = vec![0.0f64; 4 * n_vertices];
    let options = config.render_options();

    for it in 0..config.iterations {
        let batch = draw_batch(&sampler, cameras, images, config, it as u64);
        let parts: Vec<(f64, Vec<(u32, [f64; 4])>)> = batch
            .par_chunks(CHUNK)
            .map_init(Scratch::default, |s, chunk| {
                let mut loss = 0.0;
                let mut out = Vec::new();
                for r in chunk {
                    loss += ray_backward(&field, r, &options, config.batch_rays, s, &mut out);
                }
                (loss, out)
            })
            .collect();

        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (l, entries) in parts {
            loss += l;
            for (v, g) in entries {
                let base = 4 * v as usize;
                for (k, gk) in g.iter().enumerate() {
                    grad[base + k] += gk;
                }
            }
        }
        history.push(loss / config.batch_rays as f64);
        adam.step(&mut field, &grad, config, it + 1);
        if config.iterations >= 10 && (it + 1) % (config.iterations / 10) == 0 {
            log::debug!("train: iteration {}/{} loss {:.5}", it + 1, config.iterations, loss / config.batch_rays as f64);
        }
    }
    Ok(TrainOutcome {
        field,
        loss_history: history,
    })
}

struct TrainRay {
    ray: Ray,
    mode: SampleMode,
    target: [f64; 3],
}

fn draw_batch(
    sampler: &PixelSampler,
    cameras: &[Camera],
    images: &[ImageRgb],
    config: &TrainConfig,
    iteration: u64,
) -> Vec<TrainRay> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, iteration));
    (0..config.batch_rays)
        .map(|_| {
            let (cam, px, py) = sampler.draw(&mut rng);
            let ray = generate_ray(&cameras[cam], px, py).expect("sampler stays in range");
            let mode = if config.jitter {
                SampleMode::Jitter(rng.gen())
            } else {
                SampleMode::Midpoint
            };
            TrainRay {
                ray,
                mode,
                target: images[cam].pixel(px, py),
            }
        })
        .collect()
}

#[derive(Default)]
struct Scratch {
    samples: RaySamples,
    stencils: Vec<crate::lattice::Stencil>,
    raw_density: Vec<f64>,
    density: Vec<f64>,
    color: Vec<[f64; 3]>,
    weights: Vec<f64>,
    trans_after: Vec<f64>,
}

/// Forward and backward pass for one ray. Appends raw-grid gradient
/// contributions `(vertex, [d_density, d_r, d_g, d_b])` of the batch loss and
/// returns this ray's squared error averaged over channels.
fn ray_backward(
    field: &VoxelField,
    r: &TrainRay,
    options: &RenderOptions,
    batch: usize,
    s: &mut Scratch,
    out: &mut Vec<(u32, [f64; 4])>,
) -> f64 {
    let bg = options.background;
    let Some(ray) = r.ray.clipped_to(field.bounds()) else {
        return (0..3).map(|c| (bg[c] - r.target[c]).powi(2)).sum::<f64>() / 3.0;
    };
    sample_stratified_into(&ray, options.samples_per_ray, r.mode, &mut s.samples);
    let n = s.samples.len();
    s.stencils.clear();
    s.raw_density.clear();
    s.density.clear();
    s.color.clear();
    for x in &s.samples.points {
        let u = field.bounds().to_unit(x).map(|v| v.clamp(0.0, 1.0));
        let st = field.lattice().stencil_unchecked(&u);
        let d = field.raw_density().blend(&st)[0];
        let c = field.raw_color().blend(&st);
        s.raw_density.push(d);
        s.density.push(softplus(d));
        s.color.push([sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])]);
        s.stencils.push(st);
    }

    s.weights.clear();
    s.trans_after.clear();
    let mut trans = 1.0f64;
    let mut rgb = [0.0f64; 3];
    for i in 0..n {
        let od = s.density[i] * s.samples.delta[i];
        let w = trans * -(-od).exp_m1();
        trans *= (-od).exp();
        s.weights.push(w);
        s.trans_after.push(trans);
        for c in 0..3 {
            rgb[c] += w * s.color[i][c];
        }
    }
    let mut g_out = [0.0; 3];
    let mut loss = 0.0;
    for c in 0..3 {
        let e = rgb[c] + trans * bg[c] - r.target[c];
        loss += e * e;
        g_out[c] = 2.0 * e / (3.0 * batch as f64);
    }

    let mut tail = [trans * bg[0], trans * bg[1], trans * bg[2]];
    for i in (0..n).rev() {
        let w = s.weights[i];
        let col = s.color[i];
        let mut d_tau = 0.0;
        for c in 0..3 {
            d_tau += g_out[c] * s.samples.delta[i] * (s.trans_after[i] * col[c] - tail[c]);
            tail[c] += w * col[c];
        }
        let g = [
            d_tau * sigmoid(s.raw_density[i]),
            g_out[0] * w * col[0] * (1.0 - col[0]),
            g_out[1] * w * col[1] * (1.0 - col[1]),
            g_out[2] * w * col[2] * (1.0 - col[2]),
        ];
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        let st = &s.stencils[i];
        for (corner, phi) in st.corners.iter().zip(st.weights.iter()) {
            if *phi != 0.0 {
                out.push((*corner as u32, g.map(|v| v * phi)));
            }
        }
    }
    loss / 3.0
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, field: &mut VoxelField, grad: &[f64], cfg: &TrainConfig, t: usize) {
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        let mut update = |k: usize| -> f64 {
            let g = grad[k];
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[k] / bc1;
            let vh = self.v[k] / bc2;
            cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon)
        };
        let n = grad.len() / 4;
        let mut steps = vec![[0.0f64; 4]; n];
        for (vtx, step) in steps.iter_mut().enumerate() {
            for (k, sk) in step.iter_mut().enumerate() {
                *sk = update(4 * vtx + k);
            }
        }
        for (d, st) in field.raw_density_mut().values_mut().iter_mut().zip(&steps) {
            d[0] = (d[0] as f64 - st[0]) as f32;
        }
        for (c, st) in field.raw_color_mut().values_mut().iter_mut().zip(&steps) {
            for ch in 0..3 {
                c[ch] = (c[ch] as f64 - st[ch + 1]) as f32;
            }
        }
    }
}
