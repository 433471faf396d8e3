//! Persistence: camera manifests, "VXF1" fields, "UNC1" uncertainty grids,
//! "IMGF" float planes and 8-bit PNGs. Binary payloads are little-endian.
//! Every save writes a temporary sibling and renames it into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::colormap::viridis;
use crate::error::SceneIoError;
use crate::field::VoxelField;
use crate::geometry::Aabb;
use crate::lattice::{Grid, Lattice};
use crate::render::ImageRgb;
use crate::uq::UncertaintyField;

pub const FIELD_MAGIC: [u8; 4] = *b"VXF1";
pub const UNCERTAINTY_MAGIC: [u8; 4] = *b"UNC1";
pub const PLANE_MAGIC: [u8; 4] = *b"IMGF";

/// Largest vertex count accepted from a file header.
const MAX_VERTICES: u64 = 1 << 31;

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), SceneIoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| SceneIoError::Invariant(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        SceneIoError::io(path, e)
    })
}

fn read(path: &Path) -> Result<Vec<u8>, SceneIoError> {
    fs::read(path).map_err(|e| SceneIoError::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SceneIoError> {
        if self.buf.len() - self.pos < n {
            return Err(SceneIoError::Truncated {
                needed: self.pos + n,
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), SceneIoError> {
        let n = self.buf.len().min(4);
        if self.buf.len() < 4 {
            return Err(SceneIoError::Truncated {
                needed: 4,
                found: n,
            });
        }
        let found = self.take(4)?;
        if found != expected {
            return Err(SceneIoError::BadMagic {
                expected,
                found: found.to_vec(),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, SceneIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, SceneIoError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SceneIoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn need(&self, n: u64) -> Result<(), SceneIoError> {
        let have = (self.buf.len() - self.pos) as u64;
        if have < n {
            return Err(SceneIoError::Truncated {
                needed: (self.pos as u64 + n).min(usize::MAX as u64) as usize,
                found: self.buf.len(),
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), SceneIoError> {
        if self.pos != self.buf.len() {
            return Err(SceneIoError::Invariant(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }

    fn aabb(&mut self) -> Result<Aabb, SceneIoError> {
        let mut v = [0.0; 6];
        for x in v.iter_mut() {
            *x = self.f64()?;
        }
        Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
            .map_err(|e| SceneIoError::Invariant(e.to_string()))
    }
}

fn put_aabb(out: &mut Vec<u8>, b: &Aabb) {
    for v in b.min.iter().chain(b.max.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn lattice_from_header(dims: [u32; 3]) -> Result<Lattice, SceneIoError> {
    let d = dims.map(|v| v as u64);
    let count = d[0]
        .checked_mul(d[1])
        .and_then(|v| v.checked_mul(d[2]))
        .filter(|v| *v <= MAX_VERTICES)
        .ok_or(SceneIoError::ResolutionOverflow(d))?;
    let _ = count;
    Lattice::new(dims.map(|v| v as usize)).map_err(|e| SceneIoError::Invariant(e.to_string()))
}

pub fn encode_field(field: &VoxelField) -> Vec<u8> {
    let n = field.lattice().len();
    let mut out = Vec::with_capacity(4 + 12 + 48 + 16 * n);
    out.extend_from_slice(&FIELD_MAGIC);
    for d in field.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    put_aabb(&mut out, field.bounds());
    for v in field.raw_density().values() {
        out.extend_from_slice(&v[0].to_le_bytes());
    }
    for v in field.raw_color().values() {
        for c in v {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<VoxelField, SceneIoError> {
    let mut r = Reader::new(bytes);
    r.magic(FIELD_MAGIC)?;
    let dims = [r.u32()?, r.u32()?, r.u32()?];
    let lattice = lattice_from_header(dims)?;
    let bounds = r.aabb()?;
    let n = lattice.len();
    r.need(16 * n as u64)?;
    let mut density = Vec::with_capacity(n);
    for _ in 0..n {
        density.push([r.f32()?]);
    }
    let mut color = Vec::with_capacity(n);
    for _ in 0..n {
        color.push([r.f32()?, r.f32()?, r.f32()?]);
    }
    r.finish()?;
    let inv = |e: crate::error::FieldError| SceneIoError::Invariant(e.to_string());
    VoxelField::from_grids(
        bounds,
        Grid::from_values(lattice, density).map_err(inv)?,
        Grid::from_values(lattice, color).map_err(inv)?,
    )
    .map_err(inv)
}

pub fn save_field(path: &Path, field: &VoxelField) -> Result<(), SceneIoError> {
    atomic_write(path, &encode_field(field))
}

pub fn load_field(path: &Path) -> Result<VoxelField, SceneIoError> {
    decode_field(&read(path)?)
}

pub fn encode_uncertainty(uf: &UncertaintyField) -> Vec<u8> {
    let n = uf.lattice().len();
    let mut out = Vec::with_capacity(4 + 4 + 48 + 16 * n + 16);
    out.extend_from_slice(&UNCERTAINTY_MAGIC);
    out.extend_from_slice(&(uf.resolution() as u32).to_le_bytes());
    put_aabb(&mut out, uf.bounds());
    for (axes, s) in uf.sigma_axes().iter().zip(uf.sigma()) {
        for v in axes.iter().chain(std::iter::once(&s)) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let (lo, hi) = uf.log_sigma_range();
    out.extend_from_slice(&lo.to_le_bytes());
    out.extend_from_slice(&hi.to_le_bytes());
    out
}

pub fn decode_uncertainty(bytes: &[u8]) -> Result<UncertaintyField, SceneIoError> {
    let mut r = Reader::new(bytes);
    r.magic(UNCERTAINTY_MAGIC)?;
    let m = r.u32()?;
    let lattice = lattice_from_header([m; 3])?;
    let bounds = r.aabb()?;
    let n = lattice.len();
    r.need(16 * n as u64 + 16)?;
    let mut axes = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for _ in 0..n {
        axes.push([r.f32()?, r.f32()?, r.f32()?]);
        sigma.push(r.f32()?);
    }
    let range = (r.f64()?, r.f64()?);
    r.finish()?;
    UncertaintyField::from_parts(bounds, lattice, axes, sigma, Some(range))
        .map_err(|e| SceneIoError::Invariant(e.to_string()))
}

pub fn save_uncertainty(path: &Path, uf: &UncertaintyField) -> Result<(), SceneIoError> {
    atomic_write(path, &encode_uncertainty(uf))
}

pub fn load_uncertainty(path: &Path) -> Result<UncertaintyField, SceneIoError> {
    decode_uncertainty(&read(path)?)
}

/// A float image with `channels` interleaved values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatPlane {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl FloatPlane {
    pub fn single(width: u32, height: u32, values: &[f64]) -> Self {
        Self {
            width,
            height,
            channels: 1,
            data: values.iter().map(|v| *v as f32).collect(),
        }
    }
}

pub fn encode_plane(plane: &FloatPlane) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * plane.data.len());
    out.extend_from_slice(&PLANE_MAGIC);
    for v in [plane.width, plane.height, plane.channels] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &plane.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_plane(bytes: &[u8]) -> Result<FloatPlane, SceneIoError> {
    let mut r = Reader::new(bytes);
    r.magic(PLANE_MAGIC)?;
    let (width, height, channels) = (r.u32()?, r.u32()?, r.u32()?);
    let count = (width as u64)
        .checked_mul(height as u64)
        .and_then(|v| v.checked_mul(channels as u64))
        .filter(|v| *v <= MAX_VERTICES)
        .ok_or(SceneIoError::ResolutionOverflow([
            width as u64,
            height as u64,
            channels as u64,
        ]))? as usize;
    r.need(4 * count as u64)?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f32()?);
    }
    r.finish()?;
    Ok(FloatPlane {
        width,
        height,
        channels,
        data,
    })
}

pub fn save_plane(path: &Path, plane: &FloatPlane) -> Result<(), SceneIoError> {
    atomic_write(path, &encode_plane(plane))
}

pub fn load_plane(path: &Path) -> Result<FloatPlane, SceneIoError> {
    decode_plane(&read(path)?)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn png_bytes(width: u32, height: u32, rgb8: Vec<u8>) -> Vec<u8> {
    let img = image::RgbImage::from_raw(width, height, rgb8).expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("encoding to memory cannot fail");
    out.into_inner()
}

/// 8-bit PNG of linear RGB values in `[0,1]` (clamped).
pub fn encode_png_rgb(width: u32, height: u32, rgb: &[[f64; 3]]) -> Vec<u8> {
    png_bytes(width, height, rgb.iter().flat_map(|p| p.map(to_u8)).collect())
}

/// PNG of a scalar plane in `[0,1]` through the viridis ramp.
pub fn encode_png_colormap(width: u32, height: u32, values: &[f64]) -> Vec<u8> {
    png_bytes(width, height, values.iter().flat_map(|v| viridis(*v)).collect())
}

pub fn save_png(path: &Path, image: &ImageRgb) -> Result<(), SceneIoError> {
    atomic_write(path, &encode_png_rgb(image.width, image.height, &image.pixels))
}

pub fn load_png(path: &Path) -> Result<ImageRgb, SceneIoError> {
    let bytes = read(path)?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| SceneIoError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img
        .pixels()
        .map(|p| p.0.map(|v| v as f64 / 255.0))
        .collect();
    Ok(ImageRgb::new(w, h, pixels))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    #[serde(default)]
    pub test: Vec<usize>,
}

/// Cameras with their image files, the scene box and the train/test split.
/// Image paths are relative to `root`, the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub root: PathBuf,
    pub aabb: Aabb,
    pub cameras: Vec<Camera>,
    pub files: Vec<String>,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestCamera {
    file: String,
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    world_from_camera: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    aabb: [[f64; 3]; 2],
    cameras: Vec<ManifestCamera>,
    split: Split,
}

impl SceneBundle {
    pub fn image_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.files[index])
    }

    pub fn train_cameras(&self) -> Vec<Camera> {
        self.split.train.iter().map(|&i| self.cameras[i].clone()).collect()
    }

    pub fn test_cameras(&self) -> Vec<Camera> {
        self.split.test.iter().map(|&i| self.cameras[i].clone()).collect()
    }

    /// Loads the PNG images of the given camera indices.
    pub fn load_images(&self, indices: &[usize]) -> Result<Vec<ImageRgb>, SceneIoError> {
        indices.iter().map(|&i| load_png(&self.image_path(i))).collect()
    }

    fn check(&self, check_images: bool) -> Result<(), SceneIoError> {
        if self.split.train.is_empty() {
            return Err(SceneIoError::Invariant("split has no train cameras".into()));
        }
        if self.files.len() != self.cameras.len() {
            return Err(SceneIoError::Invariant("one file per camera required".into()));
        }
        for &i in self.split.train.iter().chain(&self.split.test) {
            if i >= self.cameras.len() {
                return Err(SceneIoError::Invariant(format!(
                    "split index {i} but only {} cameras",
                    self.cameras.len()
                )));
            }
        }
        if check_images {
            for (i, cam) in self.cameras.iter().enumerate() {
                let path = self.image_path(i);
                let (w, h) = image::image_dimensions(&path).map_err(|e| match e {
                    image::ImageError::IoError(io) => SceneIoError::io(&path, io),
                    other => SceneIoError::Image {
                        path: path.clone(),
                        message: other.to_string(),
                    },
                })?;
                if (w, h) != (cam.width, cam.height) {
                    return Err(SceneIoError::Invariant(format!(
                        "{} is {w}x{h} but camera {i} is {}x{}",
                        path.display(),
                        cam.width,
                        cam.height
                    )));
                }
            }
        }
        Ok(())
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> SceneIoError {
    SceneIoError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses and validates a manifest without touching the images.
pub fn parse_manifest(path: &Path, text: &str) -> Result<SceneBundle, SceneIoError> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| malformed(path, e.to_string()))?;
    let aabb = Aabb::new(m.aabb[0], m.aabb[1]).map_err(|e| malformed(path, e.to_string()))?;
    let mut cameras = Vec::with_capacity(m.cameras.len());
    let mut files = Vec::with_capacity(m.cameras.len());
    for (index, c) in m.cameras.into_iter().enumerate() {
        let pose: [f64; 12] = c.world_from_camera.as_slice().try_into().map_err(|_| {
            malformed(
                path,
                format!(
                    "camera {index}: world_from_camera needs 12 values, got {}",
                    c.world_from_camera.len()
                ),
            )
        })?;
        let cam = Camera::from_pose_rows(&pose, [c.fx, c.fy, c.cx, c.cy], c.width, c.height)
            .map_err(|e| SceneIoError::InvalidPose {
                index,
                message: e.to_string(),
            })?;
        cameras.push(cam);
        files.push(c.file);
    }
    Ok(SceneBundle {
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        aabb,
        cameras,
        files,
        split: m.split,
    })
}

/// Loads a manifest and checks that every image exists with its camera's size.
pub fn load_scene(path: &Path) -> Result<SceneBundle, SceneIoError> {
    let text = fs::read_to_string(path).map_err(|e| SceneIoError::io(path, e))?;
    let bundle = parse_manifest(path, &text)?;
    bundle.check(true)?;
    Ok(bundle)
}

pub fn manifest_json(bundle: &SceneBundle) -> String {
    let m = Manifest {
        aabb: [bundle.aabb.min, bundle.aabb.max],
        cameras: bundle
            .cameras
            .iter()
            .zip(&bundle.files)
            .map(|(c, f)| ManifestCamera {
                file: f.clone(),
                width: c.width,
                height: c.height,
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                world_from_camera: c.pose_rows().to_vec(),
            })
            .collect(),
        split: bundle.split.clone(),
    };
    serde_json::to_string_pretty(&m).expect("manifest serializes")
}

/// Writes the manifest only; images are saved separately.
pub fn save_scene(path: &Path, bundle: &SceneBundle) -> Result<(), SceneIoError> {
    bundle.check(false)?;
    atomic_write(path, manifest_json(bundle).as_bytes())
}
