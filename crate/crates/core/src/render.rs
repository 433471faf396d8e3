//! Stratified ray sampling, emission-absorption compositing and multi-channel
//! rendering (RGB, depth, opacity, log-uncertainty, thresholded clean-up).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{generate_ray, Camera, Ray};
use crate::error::RenderError;
use crate::field::VoxelField;
use crate::geometry::Vec3;
use crate::uq::UncertaintyField;

/// Floor on opacity when normalizing expected depth.
pub const DEPTH_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Bin centers; fully deterministic.
    Midpoint,
    /// One uniform draw per bin from a generator seeded with this value.
    Jitter(u64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    /// `delta[i] = t[i+1] - t[i]`; the last entry is `far - t[last]`.
    pub delta: Vec<f64>,
    pub points: Vec<Vec3>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Splits `[near, far]` into `n` equal bins and places one sample per bin.
pub fn sample_stratified(ray: &Ray, n: usize, mode: SampleMode) -> RaySamples {
    let mut out = RaySamples::default();
    sample_stratified_into(ray, n, mode, &mut out);
    out
}

pub(crate) fn sample_stratified_into(ray: &Ray, n: usize, mode: SampleMode, out: &mut RaySamples) {
    out.t.clear();
    out.delta.clear();
    out.points.clear();
    if n == 0 {
        return;
    }
    let bin = (ray.far - ray.near) / n as f64;
    match mode {
        SampleMode::Midpoint => {
            for i in 0..n {
                out.t.push(ray.near + (i as f64 + 0.5) * bin);
            }
        }
        SampleMode::Jitter(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                let lo = ray.near + i as f64 * bin;
                out.t.push((lo + rng.gen::<f64>() * bin).min(lo + bin));
            }
        }
    }
    for i in 0..n {
        let next = if i + 1 < n { out.t[i + 1] } else { ray.far };
        out.delta.push(next - out.t[i]);
        out.points.push(ray.at(out.t[i]));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    /// Background already blended in.
    pub rgb: [f64; 3],
    pub weights: Vec<f64>,
    pub opacity: f64,
    pub depth: f64,
}

/// Emission-absorption compositing:
/// `w_i = exp(-sum_{j<i} tau_j delta_j) * (1 - exp(-tau_i delta_i))`,
/// `rgb = sum w_i c_i + (1 - opacity) * background`,
/// `depth = sum w_i t_i / max(opacity, eps)`.
pub fn composite(
    densities: &[f64],
    colors: &[[f64; 3]],
    spacings: &[f64],
    positions: &[f64],
    background: [f64; 3],
) -> Result<Composite, RenderError> {
    if densities.len() != colors.len()
        || densities.len() != spacings.len()
        || densities.len() != positions.len()
    {
        return Err(RenderError::LengthMismatch {
            densities: densities.len(),
            colors: colors.len(),
            spacings: spacings.len(),
        });
    }
    if let Some((i, &d)) = densities.iter().enumerate().find(|(_, d)| !(**d >= 0.0)) {
        return Err(RenderError::NegativeDensity(d, i));
    }
    let mut weights = Vec::with_capacity(densities.len());
    let acc = accumulate(densities, colors, spacings, positions, &mut weights);
    Ok(acc.finish(weights, background))
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Accumulated {
    pub rgb: [f64; 3],
    pub opacity: f64,
    pub depth_sum: f64,
}

impl Accumulated {
    pub fn blended(&self, background: [f64; 3]) -> [f64; 3] {
        let rest = 1.0 - self.opacity;
        [
            self.rgb[0] + rest * background[0],
            self.rgb[1] + rest * background[1],
            self.rgb[2] + rest * background[2],
        ]
    }

    pub fn depth(&self) -> f64 {
        self.depth_sum / self.opacity.max(DEPTH_EPS)
    }

    fn finish(self, weights: Vec<f64>, background: [f64; 3]) -> Composite {
        Composite {
            rgb: self.blended(background),
            weights,
            opacity: self.opacity,
            depth: self.depth(),
        }
    }
}

/// Shared compositing loop; writes per-sample weights into `weights`.
#[inline]
pub(crate) fn accumulate(
    densities: &[f64],
    colors: &[[f64; 3]],
    spacings: &[f64],
    positions: &[f64],
    weights: &mut Vec<f64>,
) -> Accumulated {
    weights.clear();
    let mut trans = 1.0f64;
    let mut acc = Accumulated::default();
    for i in 0..densities.len() {
        let od = densities[i] * spacings[i];
        let alpha = -(-od).exp_m1();
        let w = trans * alpha;
        weights.push(w);
        acc.rgb[0] += w * colors[i][0];
        acc.rgb[1] += w * colors[i][1];
        acc.rgb[2] += w * colors[i][2];
        acc.depth_sum += w * positions[i];
        trans *= (-od).exp();
    }
    acc.opacity = 1.0 - trans;
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub samples_per_ray: usize,
    pub mode: SampleMode,
    pub background: [f64; 3],
    /// Remove density wherever the normalized log-uncertainty exceeds this.
    pub threshold: Option<f64>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            samples_per_ray: 64,
            mode: SampleMode::Midpoint,
            background: [0.0; 3],
            threshold: None,
        }
    }
}

impl RenderOptions {
    pub fn with_threshold(self, threshold: Option<f64>) -> Self {
        Self { threshold, ..self }
    }

    fn validate(&self) -> Result<(), RenderError> {
        if self.samples_per_ray == 0 {
            return Err(RenderError::InvalidOptions("samples_per_ray must be >= 1".into()));
        }
        if matches!(self.threshold, Some(k) if k.is_nan()) {
            return Err(RenderError::InvalidOptions("threshold is NaN".into()));
        }
        Ok(())
    }
}

/// Per-pixel render planes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub opacity: Vec<f64>,
    /// `sum_i w_i log U(x_i)`; zero when no uncertainty field was given.
    pub log_uncertainty: Vec<f64>,
    /// False where thresholding pushed opacity from >= 0.5 to below 0.5.
    pub coverage: Vec<bool>,
    /// `(min, max)` of vertex log-sigma of the uncertainty field used.
    pub log_range: Option<(f64, f64)>,
}

impl ChannelImage {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Log-uncertainty composited in normalized units, in `[0,1]`.
    pub fn normalized_log_uncertainty(&self) -> Vec<f64> {
        let Some((lo, hi)) = self.log_range else {
            return vec![0.0; self.pixel_count()];
        };
        let span = hi - lo;
        self.log_uncertainty
            .iter()
            .zip(&self.opacity)
            .map(|(&l, &o)| {
                if span > 0.0 {
                    ((l - o * lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Linear RGB image in `[0,1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl ImageRgb {
    pub fn new(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(pixels.len(), width as usize * height as usize);
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn pixel(&self, px: u32, py: u32) -> [f64; 3] {
        self.pixels[py as usize * self.width as usize + px as usize]
    }
}

impl From<&ChannelImage> for ImageRgb {
    fn from(c: &ChannelImage) -> Self {
        Self::new(c.width, c.height, c.rgb.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRender {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub log_uncertainty: f64,
    pub covered: bool,
}

#[derive(Default)]
struct Scratch {
    samples: RaySamples,
    dens: Vec<f64>,
    kept: Vec<f64>,
    cols: Vec<[f64; 3]>,
    logu: Vec<f64>,
    weights: Vec<f64>,
}

/// Renders one ray against `field`. The ray is clipped to the field bounds;
/// `mode` seeds its own jitter.
pub fn render_ray(
    field: &VoxelField,
    ray: &Ray,
    options: &RenderOptions,
    mode: SampleMode,
    uncertainty: Option<&UncertaintyField>,
) -> Result<PixelRender, RenderError> {
    options.validate()?;
    if options.threshold.is_some() && uncertainty.is_none() {
        return Err(RenderError::MissingUncertainty);
    }
    Ok(render_ray_with(
        field,
        ray,
        options,
        mode,
        uncertainty,
        &mut Scratch::default(),
    ))
}

fn render_ray_with(
    field: &VoxelField,
    ray: &Ray,
    options: &RenderOptions,
    mode: SampleMode,
    uncertainty: Option<&UncertaintyField>,
    s: &mut Scratch,
) -> PixelRender {
    let Some(ray) = ray.clipped_to(field.bounds()) else {
        return PixelRender {
            rgb: options.background,
            depth: 0.0,
            opacity: 0.0,
            log_uncertainty: 0.0,
            covered: true,
        };
    };
    sample_stratified_into(&ray, options.samples_per_ray, mode, &mut s.samples);
    s.dens.clear();
    s.cols.clear();
    s.logu.clear();
    s.kept.clear();
    for x in &s.samples.points {
        let q = field.query(x);
        s.dens.push(q.density);
        s.cols.push(q.color);
        if let Some(uf) = uncertainty {
            let lu = uf.log_uncertainty_at(x);
            s.logu.push(lu);
            if let Some(k) = options.threshold {
                let removed = uf.normalize_log(lu) > k;
                s.kept.push(if removed { 0.0 } else { q.density });
            }
        }
    }
    let full = accumulate(&s.dens, &s.cols, &s.samples.delta, &s.samples.t, &mut s.weights);
    let (shown, covered) = if options.threshold.is_some() {
        let thr = accumulate(&s.kept, &s.cols, &s.samples.delta, &s.samples.t, &mut s.weights);
        let covered = !(thr.opacity < 0.5 && full.opacity >= 0.5);
        (thr, covered)
    } else {
        (full, true)
    };
    let log_uncertainty = if s.logu.is_empty() {
        0.0
    } else {
        s.weights.iter().zip(&s.logu).map(|(w, l)| w * l).sum()
    };
    PixelRender {
        rgb: shown.blended(options.background),
        depth: shown.depth(),
        opacity: shown.opacity,
        log_uncertainty,
        covered,
    }
}

/// splitmix64 step, used to derive independent per-pixel jitter seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders every pixel of `camera`. With a threshold set, density at sample
/// points whose normalized log-uncertainty exceeds it is dropped before
/// compositing; the log-uncertainty channel uses the displayed weights.
pub fn render_channels(
    field: &VoxelField,
    camera: &Camera,
    options: &RenderOptions,
    uncertainty: Option<&UncertaintyField>,
) -> Result<ChannelImage, RenderError> {
    options.validate()?;
    camera.validate()?;
    if options.threshold.is_some() && uncertainty.is_none() {
        return Err(RenderError::MissingUncertainty);
    }
    let (w, h) = (camera.width, camera.height);
    let pixels: Vec<PixelRender> = (0..h)
        .into_par_iter()
        .flat_map_iter(|py| {
            let mut scratch = Scratch::default();
            (0..w)
                .map(|px| {
                    let ray = generate_ray(camera, px, py).expect("pixel in range");
                    let mode = match options.mode {
                        SampleMode::Midpoint => SampleMode::Midpoint,
                        SampleMode::Jitter(seed) => {
                            SampleMode::Jitter(mix_seed(seed, (py as u64) * w as u64 + px as u64))
                        }
                    };
                    render_ray_with(field, &ray, options, mode, uncertainty, &mut scratch)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(ChannelImage {
        width: w,
        height: h,
        rgb: pixels.iter().map(|p| p.rgb).collect(),
        depth: pixels.iter().map(|p| p.depth).collect(),
        opacity: pixels.iter().map(|p| p.opacity).collect(),
        log_uncertainty: pixels.iter().map(|p| p.log_uncertainty).collect(),
        coverage: pixels.iter().map(|p| p.covered).collect(),
        log_range: uncertainty.map(|u| u.log_sigma_range()),
    })
}
