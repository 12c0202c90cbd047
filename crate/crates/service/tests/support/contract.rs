//! Endpoint checks against an in-process router. Each check builds its own
//! session folder and returns a description of the first failure.

#![allow(dead_code)]

use std::future::Future;
use std::pin::Pin;

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nucleus_core::phantom::{generate_phantom, PhantomSpec};
use nucleus_core::session::{Session, SIDECAR};
use nucleus_core::{segment, BinaryMask, RgbImage};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub type Outcome = Result<(), String>;
type Check = fn() -> Pin<Box<dyn Future<Output = Outcome> + Send>>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub struct Fixture {
    pub dir: TempDir,
    pub app: Router,
    pub ids: Vec<String>,
}

pub fn phantom(seed: u64) -> RgbImage {
    generate_phantom(&PhantomSpec::random(seed, 96, 96)).unwrap().0
}

pub fn fixture(count: usize) -> Fixture {
    let dir = TempDir::new().unwrap();
    let ids: Vec<String> = (0..count).map(|i| format!("cell_{i}.png")).collect();
    for (i, id) in ids.iter().enumerate() {
        phantom(500 + i as u64).save_png(dir.path().join(id)).unwrap();
    }
    let app = nucleus_service::router(Session::open(dir.path(), 0.3).unwrap(), None);
    Fixture { dir, app, ids }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }

    fn error_code(&self) -> Option<String> {
        self.json().get("code").and_then(Value::as_str).map(str::to_string)
    }

    fn header_f64(&self, name: &str) -> Option<f64> {
        self.headers.get(name)?.to_str().ok()?.parse().ok()
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes();
    Reply { status, headers, body }
}

fn expect_error(r: &Reply, status: StatusCode, code: &str) -> Outcome {
    ensure!(r.status == status, "expected {status}, got {} {:?}", r.status, r.body);
    ensure!(r.error_code().as_deref() == Some(code), "expected code {code}, got {:?}", r.json());
    ensure!(r.json().get("message").and_then(Value::as_str).is_some(), "missing message");
    Ok(())
}

async fn session_cold_start() -> Outcome {
    let f = fixture(5);
    let r = call(&f.app, "GET", "/api/session", None).await;
    ensure!(r.status == StatusCode::OK, "status {}", r.status);
    let v = r.json();
    for (k, want) in [("image_count", json!(5)), ("pending", json!(5)), ("accepted", json!(0)), ("failed", json!(0)), ("cursor", json!(0)), ("default_alpha", json!(0.3))] {
        ensure!(v[k] == want, "{k}: {} != {want}", v[k]);
    }
    Ok(())
}

async fn image_bytes() -> Outcome {
    let f = fixture(2);
    let r = call(&f.app, "GET", &format!("/api/images/{}", f.ids[0]), None).await;
    ensure!(r.status == StatusCode::OK, "status {}", r.status);
    ensure!(r.headers["content-type"] == "image/png", "content type {:?}", r.headers["content-type"]);
    ensure!(r.body[..] == std::fs::read(f.dir.path().join(&f.ids[0])).unwrap()[..], "not a passthrough");
    let img = RgbImage::decode(&r.body)?;
    ensure!((img.width(), img.height()) == (96, 96), "dimensions");
    Ok(())
}

async fn image_bmp_is_transcoded() -> Outcome {
    let dir = TempDir::new().unwrap();
    let src = phantom(3);
    image::RgbImage::from_raw(96, 96, src.as_raw().to_vec()).unwrap().save(dir.path().join("a.bmp")).unwrap();
    let app = nucleus_service::router(Session::open(dir.path(), 0.3).unwrap(), None);
    let r = call(&app, "GET", "/api/images/a.bmp", None).await;
    ensure!(r.status == StatusCode::OK, "status {}", r.status);
    ensure!(r.headers["content-type"] == "image/png", "content type");
    ensure!(RgbImage::decode(&r.body)? == src, "pixels changed");
    Ok(())
}

async fn image_unknown_is_not_found() -> Outcome {
    let f = fixture(1);
    expect_error(&call(&f.app, "GET", "/api/images/nope.png", None).await, StatusCode::NOT_FOUND, "not_found")
}

async fn image_deleted_is_io_error() -> Outcome {
    let f = fixture(2);
    std::fs::remove_file(f.dir.path().join(&f.ids[1])).unwrap();
    expect_error(&call(&f.app, "GET", &format!("/api/images/{}", f.ids[1]), None).await, StatusCode::INTERNAL_SERVER_ERROR, "io_error")?;
    let v = call(&f.app, "GET", "/api/session", None).await.json();
    ensure!(v["orphaned"] == json!([f.ids[1]]), "orphan not flagged: {v}");
    let r = call(&f.app, "GET", &format!("/api/images/{}/mask", f.ids[1]), None).await;
    expect_error(&r, StatusCode::INTERNAL_SERVER_ERROR, "io_error")
}

async fn mask_matches_engine() -> Outcome {
    let f = fixture(2);
    let img = RgbImage::load(f.dir.path().join(&f.ids[0])).unwrap();
    for k in [-7, 0, 3, 400] {
        let r = call(&f.app, "GET", &format!("/api/images/{}/mask?offset={k}", f.ids[0]), None).await;
        ensure!(r.status == StatusCode::OK, "status {}", r.status);
        ensure!(r.headers["content-type"] == "image/png", "content type");
        let seg = segment(&img, 0.3, k).unwrap();
        ensure!(r.body[..] == seg.mask.to_png().unwrap()[..], "mask bytes differ at offset {k}");
        let t = seg.thresholds;
        for (h, v) in [("x-thv1", t.thv1), ("x-thv2", t.thv2), ("x-uthv", t.uthv), ("x-effective", t.effective)] {
            ensure!(r.header_f64(h) == Some(v), "{h}: {:?} != {v}", r.headers.get(h));
        }
    }
    Ok(())
}

async fn mask_lower_offset_is_superset() -> Outcome {
    let f = fixture(1);
    let uri = |k: i32| format!("/api/images/{}/mask?offset={k}", f.ids[0]);
    let base = BinaryMask::from_gray(&decode_gray(&call(&f.app, "GET", &uri(0), None).await.body));
    let lower = BinaryMask::from_gray(&decode_gray(&call(&f.app, "GET", &uri(-5), None).await.body));
    ensure!(base.is_subset_of(&lower), "offset -5 lost pixels");
    Ok(())
}

fn decode_gray(bytes: &[u8]) -> nucleus_core::GrayImage {
    let img = image::load_from_memory(bytes).unwrap().into_luma8();
    nucleus_core::GrayImage::from_raw(img.width(), img.height(), img.into_raw()).unwrap()
}

async fn mask_bad_offset() -> Outcome {
    let f = fixture(1);
    for q in ["abc", "1.5", "99999999999"] {
        let r = call(&f.app, "GET", &format!("/api/images/{}/mask?offset={q}", f.ids[0]), None).await;
        expect_error(&r, StatusCode::BAD_REQUEST, "invalid_param")?;
    }
    expect_error(&call(&f.app, "GET", "/api/images/nope.png/mask?offset=0", None).await, StatusCode::NOT_FOUND, "not_found")
}

async fn mask_degenerate() -> Outcome {
    let dir = TempDir::new().unwrap();
    RgbImage::filled(16, 16, [0, 0, 0]).unwrap().save_png(dir.path().join("black.png")).unwrap();
    let app = nucleus_service::router(Session::open(dir.path(), 0.3).unwrap(), None);
    expect_error(&call(&app, "GET", "/api/images/black.png/mask?offset=0", None).await, StatusCode::UNPROCESSABLE_ENTITY, "degenerate_image")?;
    expect_error(&call(&app, "POST", "/api/images/black.png/accept", None).await, StatusCode::CONFLICT, "conflict")?;
    let r = call(&app, "POST", "/api/images/black.png/fail", None).await;
    ensure!(r.status == StatusCode::OK && r.json()["status"] == "failed", "fail on degenerate: {:?}", r.json());
    Ok(())
}

async fn preview_purity() -> Outcome {
    let f = fixture(2);
    let sidecar = f.dir.path().join(SIDECAR);
    let before = std::fs::read(&sidecar).unwrap();
    for i in 0..100 {
        let r = call(&f.app, "GET", &format!("/api/images/{}/mask?offset={}", f.ids[i % 2], i as i32 - 50), None).await;
        ensure!(r.status == StatusCode::OK, "status {}", r.status);
    }
    ensure!(std::fs::read(&sidecar).unwrap() == before, "sidecar changed");
    Ok(())
}

async fn offset_commit() -> Outcome {
    let f = fixture(2);
    let r = call(&f.app, "POST", &format!("/api/images/{}/offset", f.ids[1]), Some(r#"{"delta":-4}"#)).await;
    ensure!(r.status == StatusCode::OK, "status {}", r.status);
    let v = r.json();
    ensure!(v["user_offset"] == -4 && v["status"] == "pending" && v["image_id"] == f.ids[1].as_str(), "record {v}");
    let stored = call(&f.app, "GET", &format!("/api/images/{}/record", f.ids[1]), None).await.json();
    ensure!(stored["user_offset"] == -4, "record endpoint {stored}");
    // no offset parameter: the stored one is used
    let r = call(&f.app, "GET", &format!("/api/images/{}/mask", f.ids[1]), None).await;
    ensure!(r.headers["x-offset"] == "-4", "stored offset not used");
    let reopened = Session::open(f.dir.path(), 0.3).unwrap();
    ensure!(reopened.record(&f.ids[1]).unwrap().user_offset == -4, "not persisted");
    Ok(())
}

async fn offset_errors() -> Outcome {
    let f = fixture(1);
    let uri = format!("/api/images/{}/offset", f.ids[0]);
    for body in [r#"{"delta":"x"}"#, r#"{}"#, "not json", r#"{"delta":1.5}"#] {
        expect_error(&call(&f.app, "POST", &uri, Some(body)).await, StatusCode::BAD_REQUEST, "invalid_param")?;
    }
    expect_error(&call(&f.app, "POST", &uri, None).await, StatusCode::BAD_REQUEST, "invalid_param")?;
    expect_error(&call(&f.app, "POST", "/api/images/nope.png/offset", Some(r#"{"delta":1}"#)).await, StatusCode::NOT_FOUND, "not_found")
}

async fn accept_happy_path() -> Outcome {
    let f = fixture(3);
    let r = call(&f.app, "POST", &format!("/api/images/{}/accept", f.ids[0]), None).await;
    ensure!(r.status == StatusCode::OK, "status {}", r.status);
    let v = r.json();
    ensure!(v["status"] == "accepted" && v["mask_path"] == "masks/cell_0.png", "record {v}");
    let on_disk = std::fs::read(f.dir.path().join("masks/cell_0.png")).map_err(|e| e.to_string())?;
    let img = RgbImage::load(f.dir.path().join(&f.ids[0])).unwrap();
    ensure!(on_disk == segment(&img, 0.3, 0).unwrap().mask.to_png().unwrap(), "mask file differs from engine");
    let s = call(&f.app, "GET", "/api/session", None).await.json();
    ensure!(s["accepted"] == 1 && s["cursor"] == 1, "summary {s}");
    expect_error(&call(&f.app, "POST", "/api/images/nope.png/accept", None).await, StatusCode::NOT_FOUND, "not_found")
}

async fn fail_happy_path() -> Outcome {
    let f = fixture(3);
    for id in &f.ids {
        let r = call(&f.app, "POST", &format!("/api/images/{id}/fail"), None).await;
        ensure!(r.status == StatusCode::OK && r.json()["status"] == "failed", "fail {id}: {:?}", r.json());
        ensure!(f.dir.path().join("failed").join(id).exists(), "no failed copy for {id}");
    }
    let s = call(&f.app, "GET", "/api/session", None).await.json();
    ensure!(s["failed"] == 3 && s["pending"] == 0, "summary {s}");
    expect_error(&call(&f.app, "POST", "/api/images/nope.png/fail", None).await, StatusCode::NOT_FOUND, "not_found")
}

async fn cursor_moves_and_saturates() -> Outcome {
    let f = fixture(3);
    let r = call(&f.app, "POST", "/api/session/cursor", Some(r#"{"direction":"prev"}"#)).await;
    ensure!(r.status == StatusCode::OK && r.json()["cursor"] == 0, "prev at 0: {:?}", r.json());
    for want in [1, 2, 2] {
        let r = call(&f.app, "POST", "/api/session/cursor", Some(r#"{"direction":"next"}"#)).await;
        ensure!(r.json()["cursor"] == want, "next: {:?}", r.json());
    }
    let r = call(&f.app, "POST", "/api/session/cursor", Some(r#"{"direction":"up"}"#)).await;
    expect_error(&r, StatusCode::BAD_REQUEST, "invalid_param")
}

async fn concurrent_mutations_are_serialized() -> Outcome {
    let f = fixture(2);
    let uri = format!("/api/images/{}/offset", f.ids[0]);
    let tasks: Vec<_> = (0..24)
        .map(|i| {
            let app = f.app.clone();
            let uri = uri.clone();
            let delta = if i % 3 == 0 { -1 } else { 1 };
            tokio::spawn(async move { call(&app, "POST", &uri, Some(&format!("{{\"delta\":{delta}}}"))).await.status })
        })
        .collect();
    for t in tasks {
        ensure!(t.await.unwrap() == StatusCode::OK, "post failed");
    }
    // 16 increments and 8 decrements, far from either clamp
    let reopened = Session::open(f.dir.path(), 0.3).unwrap();
    ensure!(reopened.record(&f.ids[0]).unwrap().user_offset == 8, "lost update");
    Ok(())
}

async fn unknown_route() -> Outcome {
    let f = fixture(1);
    expect_error(&call(&f.app, "GET", "/api/nothing", None).await, StatusCode::NOT_FOUND, "not_found")
}

async fn static_ui() -> Outcome {
    let f = fixture(1);
    let r = call(&f.app, "GET", "/", None).await;
    ensure!(r.status == StatusCode::OK, "root without bundle: {}", r.status);

    let ui = TempDir::new().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = nucleus_service::router(Session::open(f.dir.path(), 0.3).unwrap(), Some(ui.path().to_path_buf()));
    let r = call(&app, "GET", "/", None).await;
    ensure!(r.status == StatusCode::OK && &r.body[..] == b"<html>ui</html>", "bundle not served");
    let r = call(&app, "GET", "/api/session", None).await;
    ensure!(r.json()["image_count"] == 1, "api shadowed by bundle");
    Ok(())
}

pub fn checks() -> Vec<(&'static str, Check)> {
    macro_rules! list {
        ($($f:ident),* $(,)?) => { vec![$((stringify!($f), (|| Box::pin($f()) as Pin<Box<dyn Future<Output = Outcome> + Send>>) as Check)),*] };
    }
    list![
        session_cold_start,
        image_bytes,
        image_bmp_is_transcoded,
        image_unknown_is_not_found,
        image_deleted_is_io_error,
        mask_matches_engine,
        mask_lower_offset_is_superset,
        mask_bad_offset,
        mask_degenerate,
        preview_purity,
        offset_commit,
        offset_errors,
        accept_happy_path,
        fail_happy_path,
        cursor_moves_and_saturates,
        concurrent_mutations_are_serialized,
        unknown_route,
        static_ui,
    ]
}
