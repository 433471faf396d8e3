//! Deterministic synthetic scenes used as ground truth and as stand-ins for
//! pre-trained fields.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::field::{logit, VoxelField};
use crate::geometry::{Aabb, Vec3};
use crate::lattice::{Grid, Lattice};

/// Raw density of empty vertices. Low enough that softplus underflows to
/// exactly zero in `f64`.
pub const EMPTY_RAW_DENSITY: f32 = -800.0;

fn default_raw_density() -> f64 {
    30.0
}

/// A solid ball in normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "default_raw_density")]
    pub raw_density: f64,
    pub color: [f64; 3],
    /// Frequency of a sinusoidal brightness pattern; 0 gives a flat color.
    #[serde(default)]
    pub stripes: f64,
}

impl Blob {
    fn signed_distance(&self, u: &Vec3) -> f64 {
        (u - Vec3::from(self.center)).norm() - self.radius
    }

    fn color_at(&self, u: &Vec3) -> [f64; 3] {
        pattern(self.color, self.stripes, u)
    }
}

fn pattern(base: [f64; 3], stripes: f64, u: &Vec3) -> [f64; 3] {
    if stripes == 0.0 {
        return base;
    }
    let phase = 2.0 * std::f64::consts::PI * stripes * (u[0] + 0.7 * u[1] + 0.4 * u[2]);
    let m = 0.55 + 0.45 * phase.sin();
    [base[0] * m, base[1] * m, base[2] * m]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    /// Axis-aligned solid box between `lo` and `hi` (normalized coordinates).
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
        #[serde(default = "default_raw_density")]
        raw_density: f64,
        color: [f64; 3],
    },
    Sphere(Blob),
    /// Two balls, the first partially hiding the second from some views.
    TwoBlob { front: Blob, back: Blob },
    /// A base scene with one spurious density blob injected into it.
    Floater { base: std::boxed::Box<SceneSpec>, floater: Blob },
}

/// Names accepted by [`SceneSpec::preset`].
pub const PRESETS: [&str; 4] = ["box", "sphere", "two_blob", "floater"];

impl SceneSpec {
    /// Built-in scenes. Cameras for them come from [`crate::camera::rig`].
    pub fn preset(name: &str) -> Result<Self, FieldError> {
        let spec = match name {
            "box" => SceneSpec::Box {
                lo: [0.3; 3],
                hi: [0.7; 3],
                raw_density: default_raw_density(),
                color: [0.8, 0.3, 0.2],
            },
            "sphere" => SceneSpec::Sphere(Blob {
                center: [0.5; 3],
                radius: 0.3,
                raw_density: default_raw_density(),
                color: [0.9, 0.6, 0.3],
                stripes: 3.0,
            }),
            "two_blob" => SceneSpec::TwoBlob {
                front: Blob {
                    center: [0.5, 0.62, 0.5],
                    radius: 0.17,
                    raw_density: default_raw_density(),
                    color: [0.3, 0.7, 0.9],
                    stripes: 2.0,
                },
                back: Blob {
                    center: [0.5, 0.32, 0.5],
                    radius: 0.2,
                    raw_density: default_raw_density(),
                    color: [0.9, 0.5, 0.3],
                    stripes: 3.0,
                },
            },
            "floater" => SceneSpec::Floater {
                base: std::boxed::Box::new(SceneSpec::preset("sphere")?),
                floater: Blob {
                    center: [0.16, 0.16, 0.2],
                    radius: 0.07,
                    raw_density: default_raw_density(),
                    color: [0.95, 0.95, 0.95],
                    stripes: 0.0,
                },
            },
            other => return Err(FieldError::UnknownSceneKind(other.to_string())),
        };
        Ok(spec)
    }

    /// The scene with any injected floater removed.
    pub fn without_floaters(&self) -> SceneSpec {
        match self {
            SceneSpec::Floater { base, .. } => base.without_floaters(),
            other => other.clone(),
        }
    }

    fn blobs(&self) -> Vec<Primitive> {
        match self {
            SceneSpec::Box {
                lo,
                hi,
                raw_density,
                color,
            } => vec![Primitive::Cuboid {
                lo: *lo,
                hi: *hi,
                raw_density: *raw_density,
                color: *color,
            }],
            SceneSpec::Sphere(b) => vec![Primitive::Ball(b.clone())],
            SceneSpec::TwoBlob { front, back } => {
                vec![Primitive::Ball(front.clone()), Primitive::Ball(back.clone())]
            }
            SceneSpec::Floater { base, floater } => {
                let mut v = base.blobs();
                v.push(Primitive::Ball(floater.clone()));
                v
            }
        }
    }
}

enum Primitive {
    Cuboid {
        lo: [f64; 3],
        hi: [f64; 3],
        raw_density: f64,
        color: [f64; 3],
    },
    Ball(Blob),
}

impl Primitive {
    fn signed_distance(&self, u: &Vec3) -> f64 {
        match self {
            Primitive::Cuboid { lo, hi, .. } => {
                // distance to box; negative inside (max over slabs)
                let mut outside = 0.0f64;
                let mut inside = f64::NEG_INFINITY;
                for a in 0..3 {
                    let d = (lo[a] - u[a]).max(u[a] - hi[a]);
                    outside += d.max(0.0).powi(2);
                    inside = inside.max(d);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    inside
                }
            }
            Primitive::Ball(b) => b.signed_distance(u),
        }
    }

    fn raw_density(&self) -> f64 {
        match self {
            Primitive::Cuboid { raw_density, .. } => *raw_density,
            Primitive::Ball(b) => b.raw_density,
        }
    }

    fn color_at(&self, u: &Vec3) -> [f64; 3] {
        match self {
            Primitive::Cuboid { color, .. } => *color,
            Primitive::Ball(b) => b.color_at(u),
        }
    }
}

/// Rasterizes `spec` onto a `resolution^3` vertex lattice over `bounds`.
///
/// Vertices strictly inside a primitive take its raw density; all others are
/// empty. Every vertex takes the color of the nearest primitive so color is
/// smooth across surfaces.
pub fn make_synthetic_scene(
    spec: &SceneSpec,
    resolution: usize,
    bounds: Aabb,
) -> Result<VoxelField, FieldError> {
    let lattice = Lattice::cubic(resolution)?;
    let prims = spec.blobs();
    let mut density = Vec::with_capacity(lattice.len());
    let mut color = Vec::with_capacity(lattice.len());
    for idx in 0..lattice.len() {
        let u = lattice.vertex_position(idx);
        let mut nearest = (f64::INFINITY, 0usize);
        let mut raw = EMPTY_RAW_DENSITY as f64;
        for (p, prim) in prims.iter().enumerate() {
            let sd = prim.signed_distance(&u);
            if sd < 0.0 {
                raw = raw.max(prim.raw_density());
            }
            if sd < nearest.0 {
                nearest = (sd, p);
            }
        }
        let c = prims
            .get(nearest.1)
            .map(|p| p.color_at(&u))
            .unwrap_or([0.0; 3]);
        density.push([raw as f32]);
        color.push([
            logit(c[0]) as f32,
            logit(c[1]) as f32,
            logit(c[2]) as f32,
        ]);
    }
    VoxelField::from_grids(
        bounds,
        Grid::from_values(lattice, density)?,
        Grid::from_values(lattice, color)?,
    )
}
