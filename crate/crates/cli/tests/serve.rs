use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use tower::ServiceExt;

use raylaplace::io;
use raylaplace::*;
use raylaplace_cli::serve::{default_camera, router, serve_on, Artifacts, ServiceState};

struct Fixture {
    dir: tempfile::TempDir,
    app: Router,
    field: VoxelField,
    uf: UncertaintyField,
}

/// Field and uncertainty round-tripped through files, as the service sees them.
fn fixture() -> Fixture {
    let b = Aabb::cube(1.0);
    let gt = make_synthetic_scene(&SceneSpec::preset("floater").unwrap(), 16, b).unwrap();
    let cams = rig::upper_hemisphere(&b, 6, 3.0, 0.3, 40.0, 16);
    let cfg = UqConfig { resolution: 6, batches: 2, rays_per_batch: 256, samples_per_ray: 32, ..UqConfig::default() };
    let uf = estimate_uncertainty(&gt, &cams, &cfg).unwrap().field;
    let dir = tempfile::tempdir().unwrap();
    io::save_field(&dir.path().join("f.vxf"), &gt).unwrap();
    io::save_uncertainty(&dir.path().join("u.unc1"), &uf).unwrap();
    let field = io::load_field(&dir.path().join("f.vxf")).unwrap();
    let uf = io::load_uncertainty(&dir.path().join("u.unc1")).unwrap();
    let state = ServiceState::ready(Artifacts { field: field.clone(), uncertainty: uf.clone(), samples_per_ray: 32 });
    Fixture { dir, app: router(state), field, uf }
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

fn pose_csv(cam: &Camera) -> String {
    cam.pose_rows().iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn render_uri(cam: &Camera, rest: &str) -> String {
    format!("/render?pose={}&fx={:?}&fy={:?}&w={}&h={}{rest}", pose_csv(cam), cam.fx, cam.fy, cam.width, cam.height)
}

fn view() -> Camera {
    // off-center principal points are not expressible over the wire
    let c = rig::orbit(&Aabb::cube(1.0), 3.0, -2.4, -0.5, 40.0, 20);
    assert_eq!((c.cx, c.cy), (10.0, 10.0));
    c
}

#[tokio::test]
async fn loading_state_answers_503_but_is_alive() {
    let app = router(ServiceState::loading());
    assert_eq!(get(&app, "/healthz").await.0, StatusCode::OK);
    assert_eq!(get(&app, "/meta").await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(get(&app, &render_uri(&view(), "")).await.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn meta_matches_the_persisted_header() {
    let fx = fixture();
    let (status, body) = get(&fx.app, "/meta").await;
    assert_eq!(status, StatusCode::OK);
    let meta: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let bytes = std::fs::read(fx.dir.path().join("u.unc1")).unwrap();
    let n = bytes.len();
    let lo = f64::from_le_bytes(bytes[n - 16..n - 8].try_into().unwrap());
    let hi = f64::from_le_bytes(bytes[n - 8..].try_into().unwrap());
    assert_eq!(meta["log_sigma_range"][0].as_f64().unwrap().to_bits(), lo.to_bits());
    assert_eq!(meta["log_sigma_range"][1].as_f64().unwrap().to_bits(), hi.to_bits());
    assert_eq!(meta["M"], 6);
    assert_eq!(meta["aabb"], serde_json::json!([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]]));
    let cam = default_camera(fx.field.bounds());
    let pose: Vec<f64> = meta["default_camera"]["pose"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(pose, cam.pose_rows().to_vec());
    assert_eq!(meta["default_camera"]["w"], cam.width);
}

#[tokio::test]
async fn channels_match_direct_renders() {
    let fx = fixture();
    let cam = view();
    let opts = RenderOptions { samples_per_ray: 32, ..RenderOptions::default() };
    let direct = render_channels(&fx.field, &cam, &opts, Some(&fx.uf)).unwrap();

    let (status, rgb) = get(&fx.app, &render_uri(&cam, "&channel=rgb")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rgb, io::encode_png_rgb(20, 20, &direct.rgb));
    let (_, default) = get(&fx.app, &render_uri(&cam, "")).await;
    assert_eq!(default, rgb);

    let (status, filtered) = get(&fx.app, &render_uri(&cam, "&channel=filtered&threshold=1.0")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(filtered, rgb);
    let (_, cleaned) = get(&fx.app, &render_uri(&cam, "&channel=filtered&threshold=0.3")).await;
    let direct_cleaned = render_channels(&fx.field, &cam, &opts.with_threshold(Some(0.3)), Some(&fx.uf)).unwrap();
    assert_eq!(cleaned, io::encode_png_rgb(20, 20, &direct_cleaned.rgb));

    let (_, unc) = get(&fx.app, &render_uri(&cam, "&channel=unc")).await;
    assert_eq!(unc, io::encode_png_colormap(20, 20, &direct.normalized_log_uncertainty()));

    let (status, depth) = get(&fx.app, &render_uri(&cam, "&channel=depth")).await;
    assert_eq!(status, StatusCode::OK);
    let plane = io::decode_plane(&depth).unwrap();
    assert_eq!(plane, io::FloatPlane::single(20, 20, &direct.depth));
}

#[tokio::test]
async fn bad_requests() {
    let fx = fixture();
    let cam = view();
    assert_eq!(get(&fx.app, &render_uri(&cam, "&channel=normals")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&fx.app, "/nothing").await.0, StatusCode::NOT_FOUND);
    let good = pose_csv(&cam);
    let short = good.rsplit_once(',').unwrap().0.to_string();
    let mirrored = {
        let mut p = cam.pose_rows();
        for v in p.iter_mut().step_by(4).take(3) {
            *v = -*v;
        }
        p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
    };
    for uri in [
        "/render?fx=10&fy=10&w=8&h=8".to_string(),
        format!("/render?pose={short}&fx=10&fy=10&w=8&h=8"),
        format!("/render?pose={mirrored}&fx=10&fy=10&w=8&h=8"),
        format!("/render?pose={good}&fx=ten&fy=10&w=8&h=8"),
        format!("/render?pose={good}&fx=-1&fy=10&w=8&h=8"),
        format!("/render?pose={good}&fx=10&fy=10&w=513&h=8"),
        format!("/render?pose={good}&fx=10&fy=10&w=8&h=0"),
        format!("/render?pose={good}&fx=10&fy=10&w=8"),
        format!("/render?pose={good}&fx=10&fy=10&w=8&h=8&channel=filtered"),
        format!("/render?pose={good}&fx=10&fy=10&w=8&h=8&channel=filtered&threshold=NaN"),
        format!("/render?pose={good}&fx=10&fy=10&w=8&h=8&threshold=x"),
    ] {
        let (status, body) = get(&fx.app, &uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        let err: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(err["error"].is_string());
    }
    assert_eq!(get(&fx.app, &format!("/render?pose={good}&fx=10&fy=10&w=512&h=1")).await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_get_identical_bytes() {
    let fx = fixture();
    let uri = render_uri(&view(), "&channel=filtered&threshold=0.4");
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let app = fx.app.clone();
            let uri = uri.clone();
            tokio::spawn(async move { get(&app, &uri).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut out = Vec::new();
    s.read_to_end(&mut out).await.unwrap();
    String::from_utf8_lossy(&out).into_owned()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serves_over_tcp_once_loaded() {
    let fx = fixture();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let state = ServiceState::loading();
    let server = tokio::spawn(serve_on(
        listener,
        state,
        fx.dir.path().join("f.vxf"),
        fx.dir.path().join("u.unc1"),
        32,
    ));
    assert!(http_get(addr, "/healthz").await.starts_with("HTTP/1.1 200"));
    let mut meta = String::new();
    for _ in 0..200 {
        meta = http_get(addr, "/meta").await;
        if meta.starts_with("HTTP/1.1 200") {
            break;
        }
        assert!(meta.starts_with("HTTP/1.1 503"), "{meta}");
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    assert!(meta.starts_with("HTTP/1.1 200") && meta.contains("log_sigma_range"));
    server.abort();
}

#[tokio::test]
async fn load_failure_ends_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let r = serve_on(listener, ServiceState::loading(), dir.path().join("a.vxf"), dir.path().join("b.unc1"), 32).await;
    assert_eq!(r.unwrap_err().category(), "io");
}

#[test]
fn shared_state_is_never_replaced() {
    let fx = fixture();
    let state = ServiceState::ready(Artifacts { field: fx.field.clone(), uncertainty: fx.uf.clone(), samples_per_ray: 32 });
    let other = make_synthetic_scene(&SceneSpec::preset("sphere").unwrap(), 4, Aabb::cube(1.0)).unwrap();
    let lat = Lattice::cubic(3).unwrap();
    let coarse = UncertaintyField::from_parts(Aabb::cube(1.0), lat, vec![[1.0; 3]; 27], vec![3f32.sqrt(); 27], None).unwrap();
    state.set(Artifacts { field: other, uncertainty: coarse, samples_per_ray: 8 });
    let rt = tokio::runtime::Runtime::new().unwrap();
    let (_, body) = rt.block_on(get(&router(state), "/meta"));
    let meta: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(meta["M"], 6);
}
