//! Depth error, sparsification curves and AUSE, PSNR, clean-up coverage,
//! ensemble depth spread and rank correlation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::camera::Camera;
use crate::error::EvalError;
use crate::field::VoxelField;
use crate::lattice::{Grid, Lattice};
use crate::render::{render_channels, ChannelImage, ImageRgb, RenderOptions};
use crate::train::{fit_field, TrainConfig};
use crate::uq::UncertaintyField;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Default sparsification step.
pub const DEFAULT_STEP: f64 = 0.01;

/// Reference opacity a pixel needs to count in depth evaluation.
pub const VALID_OPACITY: f64 = 0.5;

fn same_len(a: usize, b: usize, what: &str) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `|pred - reference|` where `mask` holds; `None` elsewhere.
pub fn depth_error(
    pred: &[f64],
    reference: &[f64],
    mask: &[bool],
) -> Result<Vec<Option<f64>>, EvalError> {
    same_len(pred.len(), reference.len(), "depth planes")?;
    same_len(pred.len(), mask.len(), "depth plane and mask")?;
    Ok(pred
        .iter()
        .zip(reference)
        .zip(mask)
        .map(|((p, r), m)| m.then(|| (p - r).abs()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsificationResult {
    pub fractions: Vec<f64>,
    /// Mean error of the survivors after removing by score, divided by the
    /// mean error at fraction 0.
    pub by_score: Vec<f64>,
    /// Same, removing by error (the best possible ordering).
    pub oracle: Vec<f64>,
    pub ause: f64,
}

/// Removal order: descending key, ties by ascending index.
fn removal_order(key: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    idx
}

/// Mean error of the survivors after removing `order[..k]`, for each `k` in
/// `removed`.
fn survivor_means(errors: &[f64], order: &[usize], removed: &[usize]) -> Vec<f64> {
    // suffix sums over the removal order give every curve point in O(n)
    let n = errors.len();
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + errors[order[i]];
    }
    removed
        .iter()
        .map(|&k| suffix[k] / (n - k) as f64)
        .collect()
}

/// Sparsification curves and AUSE. At each fraction `f = k * step < 1`,
/// `floor(f n)` pixels are removed, highest key first.
pub fn sparsification(
    errors: &[f64],
    scores: &[f64],
    step: f64,
) -> Result<SparsificationResult, EvalError> {
    same_len(errors.len(), scores.len(), "errors and scores")?;
    if errors.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(EvalError::InvalidStep(step));
    }
    let n = errors.len();
    let mut fractions = Vec::new();
    let mut removed = Vec::new();
    let mut k = 0usize;
    loop {
        let f = k as f64 * step;
        if f >= 1.0 - 1e-9 {
            break;
        }
        fractions.push(f);
        removed.push(((f * n as f64 + 1e-9).floor() as usize).min(n - 1));
        k += 1;
    }
    let base = errors.iter().sum::<f64>() / n as f64;
    let mut by_score = survivor_means(errors, &removal_order(scores), &removed);
    let mut oracle = survivor_means(errors, &removal_order(errors), &removed);
    if base > 0.0 {
        by_score.iter_mut().for_each(|v| *v /= base);
        oracle.iter_mut().for_each(|v| *v /= base);
    }
    let ause = if base > 0.0 {
        by_score
            .iter()
            .zip(&oracle)
            .map(|(s, o)| s - o)
            .sum::<f64>()
            / fractions.len() as f64
    } else {
        0.0
    };
    Ok(SparsificationResult {
        fractions,
        by_score,
        oracle,
        ause,
    })
}

/// `10 log10(1 / MSE)` over all pixels and channels, capped at [`PSNR_CAP`].
pub fn psnr(image: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<f64, EvalError> {
    same_len(image.len(), reference.len(), "images")?;
    if image.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let se: f64 = image
        .iter()
        .zip(reference)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum();
    let mse = se / (3 * image.len()) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Fraction of pixels that survived thresholding.
pub fn coverage(image: &ChannelImage) -> Result<f64, EvalError> {
    if image.coverage.is_empty() || image.coverage.len() != image.pixel_count() {
        return Err(EvalError::MissingCoverage);
    }
    Ok(image.coverage.iter().filter(|c| **c).count() as f64 / image.coverage.len() as f64)
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation with average ranks for ties.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    same_len(a.len(), b.len(), "rank correlation inputs")?;
    if a.len() < 3 {
        return Err(EvalError::EmptyInput);
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(EvalError::Degenerate("an input is constant".into()));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    /// Per-pixel population standard deviation of member depths.
    pub std: Vec<f64>,
    pub depths: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

impl EnsembleResult {
    pub fn k(&self) -> usize {
        self.depths.len()
    }
}

/// Per-pixel population standard deviation (divide by `K`) of `K >= 2`
/// depth planes.
pub fn ensemble_std(depths: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    if depths.len() < 2 {
        return Err(EvalError::TooFewMembers(depths.len()));
    }
    let n = depths[0].len();
    for d in depths {
        same_len(d.len(), n, "ensemble depth planes")?;
    }
    let k = depths.len() as f64;
    Ok((0..n)
        .map(|p| {
            // shifted by the first member so identical planes give exactly 0
            let origin = depths[0][p];
            let mean = depths.iter().map(|d| d[p] - origin).sum::<f64>() / k;
            let var = depths.iter().map(|d| (d[p] - origin - mean).powi(2)).sum::<f64>() / k;
            var.sqrt()
        })
        .collect())
}

/// Adds seeded Gaussian noise of standard deviation `scale` to every raw
/// value of `field`. With `coarse >= 2` the noise is drawn on a
/// `coarse^3` lattice and interpolated, giving a smooth random perturbation
/// instead of independent per-vertex noise. Returns an exact copy when
/// `scale == 0`.
pub fn perturb_init(field: &VoxelField, scale: f64, coarse: usize, seed: u64) -> VoxelField {
    let mut out = field.clone();
    if scale == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, scale).expect("scale is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if coarse < 2 {
        for v in out.raw_density_mut().values_mut() {
            v[0] += normal.sample(&mut rng) as f32;
        }
        for v in out.raw_color_mut().values_mut() {
            for c in v.iter_mut() {
                *c += normal.sample(&mut rng) as f32;
            }
        }
        return out;
    }
    let lat = Lattice::cubic(coarse).expect("coarse >= 2");
    let values = (0..lat.len())
        .map(|_| std::array::from_fn(|_| normal.sample(&mut rng)))
        .collect();
    let noise: Grid<f64, 4> = Grid::from_values(lat, values).expect("sizes match");
    let fine = *field.lattice();
    for v in 0..fine.len() {
        let n = noise.blend(&lat.stencil_unchecked(&fine.vertex_position(v)));
        out.raw_density_mut().values_mut()[v][0] += n[0] as f32;
        for c in 0..3 {
            out.raw_color_mut().values_mut()[v][c] += n[c + 1] as f32;
        }
    }
    out
}

/// Member `m` starts from `perturb_init(init, init_noise, noise_resolution,
/// seeds[m])` and trains with `TrainConfig::seed = seeds[m]`; nothing else
/// differs between members.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub seeds: Vec<u64>,
    pub init_noise: f64,
    /// Vertices per axis of the noise lattice; below 2 means per-vertex noise.
    pub noise_resolution: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=5).collect(),
            init_noise: 0.5,
            noise_resolution: 0,
        }
    }
}

/// Trains one field per seed and returns the spread of their depth renders
/// from each evaluation camera, concatenated in camera order.
pub fn ensemble_uncertainty(
    images: &[ImageRgb],
    cameras: &[Camera],
    init: &VoxelField,
    base: &TrainConfig,
    ensemble: &EnsembleConfig,
    eval_cameras: &[Camera],
    options: &RenderOptions,
) -> Result<EnsembleResult, EvalError> {
    if ensemble.seeds.len() < 2 {
        return Err(EvalError::TooFewMembers(ensemble.seeds.len()));
    }
    let mut depths = Vec::with_capacity(ensemble.seeds.len());
    for &seed in &ensemble.seeds {
        let start = perturb_init(init, ensemble.init_noise, ensemble.noise_resolution, seed);
        let cfg = TrainConfig {
            seed,
            ..base.clone()
        };
        let trained = fit_field(images, cameras, &start, &cfg)?.field;
        let mut plane = Vec::new();
        for cam in eval_cameras {
            plane.extend(render_channels(&trained, cam, options, None)?.depth);
        }
        depths.push(plane);
    }
    Ok(EnsembleResult {
        std: ensemble_std(&depths)?,
        depths,
        seeds: ensemble.seeds.clone(),
    })
}

/// Per-pixel depth errors and uncertainty scores over the pixels a reference
/// render covers (opacity >= [`VALID_OPACITY`]), in camera then pixel order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthUncertainty {
    pub errors: Vec<f64>,
    /// Composited normalized log-uncertainty.
    pub scores: Vec<f64>,
    /// `(camera, pixel)` of each entry.
    pub pixels: Vec<(usize, usize)>,
}

pub fn depth_uncertainty(
    reference: &VoxelField,
    field: &VoxelField,
    uncertainty: &UncertaintyField,
    cameras: &[Camera],
    options: &RenderOptions,
) -> Result<DepthUncertainty, EvalError> {
    let opts = options.with_threshold(None);
    let mut out = DepthUncertainty {
        errors: Vec::new(),
        scores: Vec::new(),
        pixels: Vec::new(),
    };
    for (ci, cam) in cameras.iter().enumerate() {
        let gt = render_channels(reference, cam, &opts, None)?;
        let pred = render_channels(field, cam, &opts, Some(uncertainty))?;
        let mask: Vec<bool> = gt.opacity.iter().map(|o| *o >= VALID_OPACITY).collect();
        let err = depth_error(&pred.depth, &gt.depth, &mask)?;
        let score = pred.normalized_log_uncertainty();
        for (p, e) in err.into_iter().enumerate() {
            if let Some(e) = e {
                out.errors.push(e);
                out.scores.push(score[p]);
                out.pixels.push((ci, p));
            }
        }
    }
    Ok(out)
}

/// Flat metrics report; absent metrics are omitted from both renderings.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ause: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves: Option<SparsificationResult>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One `key value` line per scalar metric.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("ause", self.ause),
            ("psnr", self.psnr),
            ("coverage", self.coverage),
            ("spearman", self.spearman),
        ] {
            if let Some(v) = v {
                s.push_str(&format!("{k} {v:.6}\n"));
            }
        }
        if let Some(c) = &self.curves {
            s.push_str(&format!("fractions {}\n", c.fractions.len()));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anti_correlated_three_pixels() {
        let r = sparsification(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0], 1.0 / 3.0).unwrap();
        assert_eq!(r.fractions.len(), 3);
        assert_eq!(r.oracle, vec![1.0, 0.75, 0.5]);
        assert_eq!(r.by_score, vec![1.0, 1.25, 1.5]);
        assert!((r.ause - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scores_equal_errors_gives_zero() {
        let e = [0.3, 0.1, 0.9, 0.9, 0.2];
        assert_eq!(sparsification(&e, &e, 0.01).unwrap().ause, 0.0);
    }

    #[test]
    fn sparsification_errors() {
        assert!(matches!(sparsification(&[1.0], &[1.0], 0.1), Err(EvalError::EmptyInput)));
        assert!(matches!(
            sparsification(&[1.0, 2.0], &[1.0, 2.0], 0.6),
            Err(EvalError::InvalidStep(_))
        ));
        assert!(sparsification(&[1.0, 2.0], &[1.0], 0.1).is_err());
    }

    #[test]
    fn psnr_formula() {
        let a = vec![[0.5; 3]; 4];
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = vec![[0.6; 3]; 4];
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = vec![[0.55; 3]; 4];
        assert!((psnr(&a, &c).unwrap() - 26.0206).abs() < 1e-4);
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((rank_correlation(&a, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(rank_correlation(&a, &a).unwrap(), 1.0);
        assert_eq!(rank_correlation(&a, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(
            rank_correlation(&a, &[2.0; 5]),
            Err(EvalError::Degenerate(_))
        ));
    }

    #[test]
    fn two_member_population_std() {
        let s = ensemble_std(&[vec![1.0, 4.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(s, vec![0.5, 1.5]);
        assert!(matches!(ensemble_std(&[vec![1.0]]), Err(EvalError::TooFewMembers(1))));
    }

    #[test]
    fn depth_error_masks() {
        let e = depth_error(&[1.5, 2.0, 0.0], &[1.0, 2.5, 7.0], &[true, true, false]).unwrap();
        assert_eq!(e, vec![Some(0.5), Some(0.5), None]);
    }

    #[test]
    fn report_key_values() {
        let r = EvalReport {
            psnr: Some(20.0),
            coverage: Some(1.0),
            ..Default::default()
        };
        assert_eq!(r.to_key_value(), "psnr 20.000000\ncoverage 1.000000\n");
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["psnr"], 20.0);
        assert!(v.get("ause").is_none());
    }
}
