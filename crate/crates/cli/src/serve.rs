//! HTTP render service. Artifacts load once, in the background; until they
//! are ready `/meta` and `/render` answer 503. Loaded artifacts are shared
//! read-only between requests.

use std::collections::HashMap;
use std::future::IntoFuture;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;

use raylaplace::{io, render_channels, rig, Aabb, RenderOptions, UncertaintyField, VoxelField};

use crate::args::{Channel, ServeArgs};
use crate::commands::{camera_from_pose, encode_channel, parse_pose};
use crate::{input_path, thread_cap, CliError};

/// Largest width or height accepted by `/render`.
pub const MAX_SIDE: u32 = 512;

pub struct Artifacts {
    pub field: VoxelField,
    pub uncertainty: UncertaintyField,
    pub samples_per_ray: usize,
}

#[derive(Default)]
pub struct ServiceState {
    loaded: OnceLock<Arc<Artifacts>>,
}

impl ServiceState {
    pub fn loading() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn ready(artifacts: Artifacts) -> Arc<Self> {
        let s = Self::loading();
        s.set(artifacts);
        s
    }

    /// Publishes the artifacts; later calls are ignored.
    pub fn set(&self, artifacts: Artifacts) {
        let _ = self.loaded.set(Arc::new(artifacts));
    }

    fn get(&self) -> Option<Arc<Artifacts>> {
        self.loaded.get().cloned()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/meta", get(meta))
        .route("/render", get(render))
        .with_state(state)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

fn unavailable() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "artifacts are loading")
}

/// Orbit view the viewer starts from.
pub fn default_camera(aabb: &Aabb) -> raylaplace::Camera {
    rig::orbit(aabb, 3.0, 0.6, 0.4, 40.0, 256)
}

async fn meta(State(state): State<Arc<ServiceState>>) -> Response {
    let Some(a) = state.get() else {
        return unavailable();
    };
    let aabb = *a.field.bounds();
    let cam = default_camera(&aabb);
    let (lo, hi) = a.uncertainty.log_sigma_range();
    Json(json!({
        "aabb": [aabb.min, aabb.max],
        "M": a.uncertainty.resolution(),
        "log_sigma_range": [lo, hi],
        "default_camera": {
            "pose": cam.pose_rows(),
            "fx": cam.fx,
            "fy": cam.fy,
            "w": cam.width,
            "h": cam.height,
        },
    }))
    .into_response()
}

struct RenderQuery {
    pose: [f64; 12],
    fx: f64,
    fy: f64,
    w: u32,
    h: u32,
    channel: Channel,
    threshold: Option<f64>,
}

enum QueryError {
    Malformed(String),
    UnknownChannel(String),
}

fn parse_query(q: &HashMap<String, String>) -> Result<RenderQuery, QueryError> {
    use QueryError::Malformed;
    let channel_name = q.get("channel").map(String::as_str).unwrap_or("rgb");
    let channel = Channel::parse(channel_name)
        .ok_or_else(|| QueryError::UnknownChannel(channel_name.to_string()))?;
    let field = |k: &str| q.get(k).ok_or_else(|| Malformed(format!("missing {k}")));
    let float = |k: &str| -> Result<f64, QueryError> {
        let v: f64 = field(k)?
            .parse()
            .map_err(|_| Malformed(format!("{k} is not a number")))?;
        if !v.is_finite() || v <= 0.0 {
            return Err(Malformed(format!("{k} must be positive and finite")));
        }
        Ok(v)
    };
    let side = |k: &str| -> Result<u32, QueryError> {
        let v: u32 = field(k)?
            .parse()
            .map_err(|_| Malformed(format!("{k} is not an integer")))?;
        if v == 0 || v > MAX_SIDE {
            return Err(Malformed(format!("{k} must be in 1..={MAX_SIDE}")));
        }
        Ok(v)
    };
    let pose = parse_pose(field("pose")?).map_err(Malformed)?;
    let threshold = match q.get("threshold") {
        None => None,
        Some(s) => {
            let k: f64 = s
                .parse()
                .map_err(|_| Malformed("threshold is not a number".into()))?;
            if k.is_nan() {
                return Err(Malformed("threshold is NaN".into()));
            }
            Some(k)
        }
    };
    if channel == Channel::Filtered && threshold.is_none() {
        return Err(Malformed("channel=filtered needs threshold".into()));
    }
    Ok(RenderQuery {
        pose,
        fx: float("fx")?,
        fy: float("fy")?,
        w: side("w")?,
        h: side("h")?,
        channel,
        threshold,
    })
}

async fn render(
    State(state): State<Arc<ServiceState>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let Some(a) = state.get() else {
        return unavailable();
    };
    let q = match parse_query(&params) {
        Ok(q) => q,
        Err(QueryError::Malformed(m)) => return error(StatusCode::BAD_REQUEST, m),
        Err(QueryError::UnknownChannel(c)) => {
            return error(StatusCode::NOT_FOUND, format!("unknown channel {c:?}"))
        }
    };
    let cam = match camera_from_pose(&q.pose, q.fx, q.fy, q.w, q.h) {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let job = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, CliError> {
        let opts = RenderOptions {
            samples_per_ray: a.samples_per_ray,
            ..RenderOptions::default()
        };
        let unc = Some(&a.uncertainty);
        if q.channel == Channel::Filtered {
            let img = render_channels(&a.field, &cam, &opts.with_threshold(q.threshold), unc)?;
            return Ok(encode_channel(Channel::Filtered, &img, Some(&img)));
        }
        let img = render_channels(&a.field, &cam, &opts, unc)?;
        Ok(encode_channel(q.channel, &img, None))
    });
    match job.await {
        Ok(Ok(bytes)) => {
            let ty = if q.channel == Channel::Depth {
                "application/octet-stream"
            } else {
                "image/png"
            };
            ([(header::CONTENT_TYPE, ty)], bytes).into_response()
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn load(field: PathBuf, uncertainty: PathBuf, samples_per_ray: usize) -> Result<Artifacts, CliError> {
    Ok(Artifacts {
        field: io::load_field(&field)?,
        uncertainty: io::load_uncertainty(&uncertainty)?,
        samples_per_ray,
    })
}

/// Serves on `listener` while loading the artifacts in the background. A
/// load failure ends the service with that error.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    field: PathBuf,
    uncertainty: PathBuf,
    samples_per_ray: usize,
) -> Result<(), CliError> {
    let loader = {
        let state = state.clone();
        tokio::task::spawn_blocking(move || -> Result<(), CliError> {
            let start = std::time::Instant::now();
            state.set(load(field, uncertainty, samples_per_ray)?);
            log::info!("serve: artifacts loaded in {:.2} s", start.elapsed().as_secs_f64());
            Ok(())
        })
    };
    let server = axum::serve(listener, router(state)).into_future();
    let mut server = std::pin::pin!(server);
    let io_err = |e: std::io::Error| CliError::Io(e.to_string());
    tokio::select! {
        r = &mut server => return r.map_err(io_err),
        r = loader => match r {
            Ok(Ok(())) => {}
            Ok(Err(e)) => return Err(e),
            Err(e) => return Err(CliError::Io(e.to_string())),
        },
    }
    server.await.map_err(io_err)
}

pub fn run(mut a: ServeArgs) -> Result<(), CliError> {
    a.field = input_path(&a.field)?;
    a.uncertainty = input_path(&a.uncertainty)?;
    if a.samples_per_ray == 0 {
        return Err(CliError::Config("--samples-per-ray must be >= 1".into()));
    }
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = thread_cap()? {
        rt.worker_threads(n);
    }
    let rt = rt.enable_all().build().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async move {
        let addr: SocketAddr = format!("{}:{}", a.host, a.port)
            .parse()
            .map_err(|e| CliError::Config(format!("bad address: {e}")))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
        let echo = serde_json::to_string(&json!({ "command": "serve", "config": &a })).expect("serializes");
        eprintln!("{echo}");
        eprintln!("serve: listening on http://{}", listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?);
        serve_on(listener, ServiceState::loading(), a.field.clone(), a.uncertainty.clone(), a.samples_per_ray).await
    })
}
