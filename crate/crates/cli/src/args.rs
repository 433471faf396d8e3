//! Command-line surface. Flag names follow the config field names.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use raylaplace::{RenderOptions, SampleMode, TrainConfig, UqConfig};

#[derive(Debug, Parser)]
#[command(name = "raylaplace", version, about = "Voxel radiance fields with Laplace spatial uncertainty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a synthetic scene: ground-truth field, rendered views, manifest.
    Synth(SynthArgs),
    /// Fit a voxel field to a scene's training views.
    Train(TrainArgs),
    /// Estimate the deformation-grid uncertainty of a trained field.
    Uq(UqArgs),
    /// Render channels for one camera.
    Render(RenderArgs),
    /// PSNR, AUSE and coverage over the scene's test views.
    Eval(EvalArgs),
    /// Render the test views at a list of thresholds.
    Sweep(SweepArgs),
    /// HTTP render service for interactive clean-up.
    Serve(ServeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Uq(_) => "uq",
            Command::Render(_) => "render",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Serve(_) => "serve",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Preset name: box, sphere, two_blob or floater.
    #[arg(long)]
    pub scene: String,
    /// Vertices per axis of the ground-truth field.
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    /// Training views (for floater: candidate views before filtering).
    #[arg(long, default_value_t = 20)]
    pub views: usize,
    #[arg(long, default_value_t = 5)]
    pub test_views: usize,
    #[arg(long, default_value_t = 48)]
    pub image_size: u32,
    /// Camera distance in half box extents.
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 40.0)]
    pub fov: f64,
    /// Lowest training elevation, radians.
    #[arg(long, default_value_t = 0.25)]
    pub min_elevation: f64,
    /// Half extent of the cubic scene box.
    #[arg(long, default_value_t = 1.0)]
    pub half_extent: f64,
    #[arg(long, default_value_t = 64)]
    pub samples_per_ray: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = TrainConfig::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_rays)]
    pub batch_rays: usize,
    #[arg(long, default_value_t = TrainConfig::default().beta1)]
    pub beta1: f64,
    #[arg(long, default_value_t = TrainConfig::default().beta2)]
    pub beta2: f64,
    #[arg(long, default_value_t = TrainConfig::default().epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().samples_per_ray)]
    pub samples_per_ray: usize,
    /// Use bin midpoints instead of jittered samples.
    #[arg(long)]
    pub no_jitter: bool,
}

impl TrainOpts {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            batch_rays: self.batch_rays,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed,
            samples_per_ray: self.samples_per_ray,
            jitter: !self.no_jitter,
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Scene manifest.
    #[arg(long)]
    pub scene: PathBuf,
    /// Initial field; a constant field is used when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Vertices per axis of the constant initial field.
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    /// Raw density of the constant initial field.
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub init_density: f32,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct UqOpts {
    /// Deformation grid vertices per axis (M).
    #[arg(long, default_value_t = UqConfig::default().resolution)]
    pub resolution: usize,
    /// Prior precision; 1e-4 / M^3 when absent.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = UqConfig::default().batches)]
    pub batches: usize,
    #[arg(long, default_value_t = UqConfig::default().rays_per_batch)]
    pub rays_per_batch: usize,
    #[arg(long, default_value_t = UqConfig::default().samples_per_ray)]
    pub samples_per_ray: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_jitter: bool,
}

impl UqOpts {
    pub fn config(&self) -> UqConfig {
        UqConfig {
            resolution: self.resolution,
            lambda: self.lambda,
            batches: self.batches,
            rays_per_batch: self.rays_per_batch,
            samples_per_ray: self.samples_per_ray,
            seed: self.seed,
            jitter: !self.no_jitter,
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct UqArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// Scene manifest; its training cameras are used.
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub uq: UqOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderOpts {
    #[arg(long, default_value_t = 64)]
    pub samples_per_ray: usize,
    /// Jitter seed; midpoint sampling when absent.
    #[arg(long)]
    pub jitter_seed: Option<u64>,
}

impl RenderOpts {
    pub fn options(&self, threshold: Option<f64>) -> RenderOptions {
        RenderOptions {
            samples_per_ray: self.samples_per_ray,
            mode: self.jitter_seed.map_or(SampleMode::Midpoint, SampleMode::Jitter),
            background: [0.0; 3],
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Rgb,
    Unc,
    Depth,
    Filtered,
}

impl Channel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rgb" => Some(Self::Rgb),
            "unc" => Some(Self::Unc),
            "depth" => Some(Self::Depth),
            "filtered" => Some(Self::Filtered),
            _ => None,
        }
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            Self::Rgb => "rgb.png",
            Self::Unc => "unc.png",
            Self::Depth => "depth.imgf",
            Self::Filtered => "filtered.png",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub uncertainty: Option<PathBuf>,
    /// Scene manifest to pick `--camera` from.
    #[arg(long, requires = "camera")]
    pub scene: Option<PathBuf>,
    #[arg(long, requires = "scene")]
    pub camera: Option<usize>,
    /// World-from-camera pose as 12 comma-separated row-major floats.
    #[arg(long, conflicts_with = "scene", requires_all = ["fx", "fy", "width", "height"], allow_hyphen_values = true)]
    pub pose: Option<String>,
    #[arg(long)]
    pub fx: Option<f64>,
    #[arg(long)]
    pub fy: Option<f64>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long, value_delimiter = ',', default_value = "rgb")]
    pub channels: Vec<Channel>,
    /// Normalized log-uncertainty above which density is removed in the
    /// filtered channel.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub render: RenderOpts,
    /// Output directory; files are named after their channel.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub uncertainty: Option<PathBuf>,
    /// Ground-truth field for reference depth; enables AUSE.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Threshold for the coverage figure.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = raylaplace::eval::DEFAULT_STEP)]
    pub step: f64,
    #[command(flatten)]
    pub render: RenderOpts,
    /// JSON report path.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub uncertainty: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"
    )]
    pub thresholds: Vec<f64>,
    #[command(flatten)]
    pub render: RenderOpts,
    /// Output directory for renders and sweep.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub uncertainty: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 64)]
    pub samples_per_ray: usize,
}
