mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::structsuite::small_config;
use common::*;
use http_body_util::BodyExt;
use remixer::data::{decode_wav, encode_wav, BitDepth};
use remixer::model::{forward_separate, init_params, remix_from_estimates, Checkpoint, Variant};
use remixer::service::*;
use remixer::signal::{GainVector, Waveform};
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "test-upload-boundary";

fn checkpoint(variant: Variant) -> Checkpoint {
    Checkpoint::new(
        variant,
        Default::default(),
        vec!["piano".into(), "drums".into(), "bass".into()],
        init_params(&small_config(3), 6).unwrap(),
    )
}

fn state_with(variant: Variant, config: ServiceConfig) -> Arc<AppState> {
    AppState::new(Some(LoadedModel::from_checkpoint(checkpoint(variant)).unwrap()), config)
}

fn state(variant: Variant) -> Arc<AppState> {
    state_with(variant, ServiceConfig::default())
}

fn mixture(len: usize, rate: u32) -> Waveform {
    let x: Vec<f64> = randn_vec(&mut rng(len as u64), len).iter().map(|v| ((0.4 * v) as f32) as f64).collect();
    Waveform::new(x, rate)
}

fn upload_body(field: &str, wav: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{field}\"; filename=\"x.wav\"\r\nContent-Type: audio/wav\r\n\r\n").as_bytes());
    b.extend_from_slice(wav);
    b.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    b
}

async fn call(state: &Arc<AppState>, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

async fn upload_raw(state: &Arc<AppState>, field: &str, wav: &[u8]) -> (StatusCode, Value) {
    let req = Request::post("/v1/sessions")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(upload_body(field, wav)))
        .unwrap();
    let (s, _, b) = call(state, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn upload(state: &Arc<AppState>, w: &Waveform) -> String {
    let (s, v) = upload_raw(state, "file", &encode_wav(w, BitDepth::Float32)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn remix(state: &Arc<AppState>, id: &str, body: Value) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let req = Request::post(format!("/v1/sessions/{id}/remix"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(state, req).await
}

async fn get(state: &Arc<AppState>, path: &str) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    call(state, Request::get(path).body(Body::empty()).unwrap()).await
}

fn f32_wave(w: &Waveform) -> Vec<f64> {
    w.samples.iter().map(|v| (*v as f32) as f64).collect()
}

#[tokio::test]
async fn session_info_and_distinct_ids() {
    let st = state(Variant::Model1);
    let w = mixture(4000, 8000);
    let (s, v) = upload_raw(&st, "file", &encode_wav(&w, BitDepth::Pcm16)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["K"], 3);
    assert_eq!(v["sample_rate"], 8000);
    assert_eq!(v["duration_s"], 0.5);
    assert_eq!(v["labels"], json!(["piano", "drums", "bass"]));
    let other = upload(&st, &w).await;
    assert_ne!(v["session_id"].as_str().unwrap(), other);
    assert_eq!(st.session_count(), 2);
}

#[tokio::test]
async fn bad_uploads_get_specific_statuses() {
    let st = state_with(Variant::Model1, ServiceConfig { max_upload_s: 1.0, ..ServiceConfig::default() });
    let ok = encode_wav(&mixture(800, 8000), BitDepth::Float32);
    assert_eq!(upload_raw(&st, "audio", &ok).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(upload_raw(&st, "file", b"definitely not a wav file").await.0, StatusCode::BAD_REQUEST);
    let wrong_rate = encode_wav(&mixture(800, 16000), BitDepth::Float32);
    let (s, v) = upload_raw(&st, "file", &wrong_rate).await;
    assert_eq!(s, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert!(v["error"].as_str().unwrap().contains("8000"));
    let mut stereo = ok.clone();
    stereo[22] = 2;
    assert_eq!(upload_raw(&st, "file", &stereo).await.0, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    let long = encode_wav(&mixture(8000 * 2, 8000), BitDepth::Float32);
    assert_eq!(upload_raw(&st, "file", &long).await.0, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(st.session_count(), 0);
}

#[tokio::test]
async fn no_model_means_unavailable() {
    let st = AppState::new(None, ServiceConfig::default());
    let ok = encode_wav(&mixture(800, 8000), BitDepth::Float32);
    assert_eq!(upload_raw(&st, "file", &ok).await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(get(&st, "/v1/model").await.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn remix_errors() {
    let st = state(Variant::Model1);
    let id = upload(&st, &mixture(800, 8000)).await;
    let unknown = uuid::Uuid::nil().to_string();
    assert_eq!(remix(&st, &unknown, json!({"gains_db": [0, 0, 0]})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(remix(&st, "not-a-uuid", json!({"gains_db": [0, 0, 0]})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(remix(&st, &id, json!({"gains_db": [0, 0]})).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(remix(&st, &id, json!({"gains": [0, 0, 0]})).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&st, &format!("/v1/sessions/{unknown}/stems")).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn remix_matches_the_library_and_is_deterministic() {
    let st = state(Variant::Model1);
    let w = mixture(1200, 8000);
    let id = upload(&st, &w).await;
    let gains = [6.0, -3.0, 0.0];
    let (s, h, a) = remix(&st, &id, json!({ "gains_db": gains })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "audio/wav");
    let (_, _, b) = remix(&st, &id, json!({ "gains_db": gains })).await;
    assert_eq!(a, b);
    let got = decode_wav(&a).unwrap();
    let ck = checkpoint(Variant::Model1);
    let sep = forward_separate(&ck.params, &w).unwrap();
    let expect = remix_from_estimates(&sep, &GainVector::from_db(gains.to_vec()).unwrap()).unwrap();
    assert_eq!(got.samples, f32_wave(&expect));
}

#[tokio::test]
async fn out_of_range_gains_are_clamped_and_reported() {
    let st = state(Variant::Model1);
    let id = upload(&st, &mixture(800, 8000)).await;
    let (s, h, body) = remix(&st, &id, json!({"gains_db": [30.0, -100.0, 5.0]})).await;
    assert_eq!(s, StatusCode::OK);
    let info: RemixInfo = serde_json::from_str(h[REMIX_HEADER].to_str().unwrap()).unwrap();
    assert_eq!(info.applied_gains_db, vec![24.0, -24.0, 5.0]);
    assert_eq!(info.clamped, vec![true, true, false]);
    assert_eq!(info.requested_gains_db, vec![30.0, -100.0, 5.0]);
    let (_, _, direct) = remix(&st, &id, json!({"gains_db": [24.0, -24.0, 5.0]})).await;
    assert_eq!(body, direct);
}

#[tokio::test]
async fn latent_remix_at_unity_equals_the_plain_path() {
    let w = mixture(1000, 8000);
    let base = state(Variant::Baseline);
    let latent = state(Variant::Model2);
    let (ib, il) = (upload(&base, &w).await, upload(&latent, &w).await);
    let (_, _, a) = remix(&base, &ib, json!({"gains_db": [0, 0, 0]})).await;
    let (_, _, b) = remix(&latent, &il, json!({"gains_db": [0, 0, 0]})).await;
    assert_eq!(a, b);
}

fn split_stems(body: &[u8]) -> Vec<(String, Vec<u8>)> {
    let delim = format!("--{STEMS_BOUNDARY}");
    let text_pos = |hay: &[u8], needle: &[u8], from: usize| {
        hay[from..].windows(needle.len()).position(|w| w == needle).map(|p| p + from)
    };
    let mut out = Vec::new();
    let mut pos = text_pos(body, delim.as_bytes(), 0).unwrap();
    loop {
        let after = pos + delim.len();
        if body[after..].starts_with(b"--") {
            break;
        }
        let head_end = text_pos(body, b"\r\n\r\n", after).unwrap();
        let head = String::from_utf8_lossy(&body[after..head_end]).to_string();
        let name = head.split("name=\"").nth(1).unwrap().split('"').next().unwrap().to_string();
        let next = text_pos(body, format!("\r\n{delim}").as_bytes(), head_end + 4).unwrap();
        out.push((name, body[head_end + 4..next].to_vec()));
        pos = next + 2;
    }
    out
}

#[tokio::test]
async fn stems_match_the_separation() {
    let st = state(Variant::Model1);
    let w = mixture(900, 8000);
    let id = upload(&st, &w).await;
    let (s, h, body) = get(&st, &format!("/v1/sessions/{id}/stems")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(h["content-type"].to_str().unwrap().starts_with("multipart/mixed"));
    let parts = split_stems(&body);
    let names: Vec<_> = parts.iter().map(|p| p.0.as_str()).collect();
    assert_eq!(names, vec!["piano", "drums", "bass"]);
    let sep = forward_separate(&checkpoint(Variant::Model1).params, &w).unwrap();
    for ((_, wav), est) in parts.iter().zip(&sep.estimates) {
        assert_eq!(decode_wav(wav).unwrap().samples, f32_wave(est));
    }
}

#[tokio::test]
async fn model_digest_is_the_file_digest() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    checkpoint(Variant::Model2).save(&path).unwrap();
    let st = AppState::new(Some(LoadedModel::from_file(&path).unwrap()), ServiceConfig::default());
    let (s, _, body) = get(&st, "/v1/model").await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    let digest: String = Sha256::digest(std::fs::read(&path).unwrap()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(v["checkpoint_sha256"], digest);
    assert_eq!(v["variant"], "model2");
    assert_eq!(v["config"]["k"], 3);
}

#[tokio::test]
async fn gain_changes_rerun_only_the_decoder() {
    let st = state(Variant::Model2);
    let id = upload(&st, &mixture(800, 8000)).await;
    for g in [[1.0, 2.0, 3.0], [-5.0, 0.0, 9.0], [0.0, 0.0, 0.0]] {
        assert_eq!(remix(&st, &id, json!({ "gains_db": g })).await.0, StatusCode::OK);
    }
    let (_, _, body) = get(&st, "/v1/debug/counters").await;
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v, json!({"separations": 1, "decodes": 3, "sessions": 1}));
}

#[tokio::test]
async fn idle_sessions_expire() {
    let st = state_with(Variant::Model1, ServiceConfig { session_ttl: Duration::from_millis(50), ..ServiceConfig::default() });
    let id = upload(&st, &mixture(800, 8000)).await;
    tokio::time::sleep(Duration::from_millis(120)).await;
    assert_eq!(remix(&st, &id, json!({"gains_db": [0, 0, 0]})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(st.session_count(), 0);
}

#[test]
fn clamp_rejects_non_finite() {
    assert!(clamp_gains(&[f64::NAN]).is_err());
    assert_eq!(clamp_gains(&[-24.0, 24.0]).unwrap().clamped, vec![false, false]);
}
