#![allow(dead_code)]

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pamg_core::api::GrowResponse;
use pamg_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn pamg_bin() -> &'static str {
    env!("CARGO_BIN_EXE_pamg")
}

/// Grows the same seeds through the `pamg grow` binary and `POST /grow` and
/// compares the RLE file, PNG and response JSON byte for byte. `root` must be a
/// dataset directory containing `{image_id}.png`. Returns the number of seeds compared.
pub fn cli_service_parity(root: &Path, image_id: &str, seeds: &[[i64; 2]], rs: Option<f64>) -> Result<usize, String> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let state = AppState::open(root, ServiceConfig::default())?;
    let app = router(Arc::new(state));
    let image = root.join(format!("{image_id}.png"));
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, s) in seeds.iter().enumerate() {
        let out = work.path().join(format!("m{i}.png"));
        let mut cmd = Command::new(pamg_bin());
        cmd.args(["grow", image.to_str().unwrap(), "--seed", &format!("{},{}", s[0], s[1]), "--out", out.to_str().unwrap()]);
        if let Some(r) = rs {
            cmd.args(["--rs", &r.to_string()]);
        }
        let o = cmd.output().map_err(|e| e.to_string())?;
        let mut body = json!({"image_id": image_id, "seed": s});
        if let Some(r) = rs {
            body["r_s"] = json!(r);
        }
        let req = Request::post("/grow")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (status, bytes) = rt.block_on(async {
            let resp = app.clone().oneshot(req).await.unwrap();
            (resp.status(), resp.into_body().collect().await.unwrap().to_bytes())
        });
        if !o.status.success() {
            // both sides must fail with the same error tag
            let cli: Value = serde_json::from_slice(&o.stderr).map_err(|e| e.to_string())?;
            let svc: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            if status == StatusCode::OK || cli["error"] != svc["error"] {
                return Err(format!("seed {s:?}: cli {cli} vs service {status} {svc}"));
            }
            continue;
        }
        if status != StatusCode::OK {
            return Err(format!("seed {s:?}: service returned {status}"));
        }
        let svc: GrowResponse = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        let cli: GrowResponse = serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())?;
        let rle = std::fs::read(out.with_extension("json")).map_err(|e| e.to_string())?;
        let png = std::fs::read(&out).map_err(|e| e.to_string())?;
        if rle != svc.mask.encode_rle().as_bytes() {
            return Err(format!("seed {s:?}: RLE differs"));
        }
        if png != svc.mask.to_png_bytes() {
            return Err(format!("seed {s:?}: PNG differs"));
        }
        if serde_json::to_vec(&cli).unwrap() != serde_json::to_vec(&svc).unwrap() {
            return Err(format!("seed {s:?}: response differs"));
        }
    }
    Ok(seeds.len())
}
