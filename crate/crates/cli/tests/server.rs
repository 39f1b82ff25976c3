use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use modalbank::dataset::{build, Dataset, DatasetConfig};
use modalbank::elastodynamics::MaterialRanges;
use modalbank::predictor::{Architecture, Predictor};
use modalbank::{AudioBuffer, SosBank, SpectralConfig, Topology};
use modalbank_cli::config::ServeSection;
use modalbank_cli::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn spectral() -> SpectralConfig {
    SpectralConfig { n_samples: 2048, n_mels: 32, ..Default::default() }
}

fn dataset_dir() -> &'static std::path::Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            n_shapes: 2,
            materials_per_shape: 1,
            positions_per_pair: 2,
            seed: 3,
            spectral: spectral(),
            target_triangles: 120,
            n_modes: 8,
            ..Default::default()
        };
        build(&cfg, d.path()).unwrap();
        d
    })
    .path()
}

fn state() -> Arc<AppState> {
    let arch = Architecture {
        channels: vec![4, 4, 4, 4],
        embed_dim: 8,
        hidden: vec![16],
        topology: Topology { l: 4, m: 2 },
    };
    let mut model = Predictor::new(arch, MaterialRanges::default(), spectral(), 1).unwrap();
    // nonzero output layer so predictions depend on the inputs
    let out = model.out_layer_range();
    for (i, w) in model.weights[out].iter_mut().enumerate() {
        *w = 1e-3 * ((i * 7919 % 13) as f64 - 6.0);
    }
    let opts = ServeSection { n_modes: 8, fit_steps: 20, fit_topology: Topology { l: 4, m: 2 }, ..Default::default() };
    AppState::new(Some(Dataset::open(dataset_dir()).unwrap()), Some(model), spectral(), MaterialRanges::default(), opts, 0)
}

fn material() -> Value {
    json!({ "rho": 2700.0, "youngs": 7e10 / 2.0, "poisson": 0.33, "alpha": 2.0, "beta": 1e-6 })
}

/// A point inside shape `id`: its centroid.
fn inside(st: &AppState, id: usize) -> [f64; 2] {
    let c = st.dataset.as_ref().unwrap().shape(id).unwrap().centroid();
    [c.x, c.y]
}

async fn call(st: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(st.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn parse(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn lists_shapes_and_occupancy() {
    let st = state();
    let (s, b) = call(&st, "GET", "/shapes", None).await;
    assert_eq!(s, StatusCode::OK);
    let v = parse(&b);
    assert_eq!(v["shapes"].as_array().unwrap().len(), 2);
    assert_eq!(v["sample_rate"], 32000);
    assert!(v["ranges"]["rho"].is_array());

    let (s, b) = call(&st, "GET", "/shapes/1/occupancy", None).await;
    assert_eq!(s, StatusCode::OK);
    let v = parse(&b);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 64);
    assert!(rows.iter().flat_map(|r| r.as_array().unwrap()).any(|c| c == 1));

    let (s, b) = call(&st, "GET", "/shapes/42/occupancy", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(parse(&b)["error"]["kind"], "not_found");
}

#[tokio::test]
async fn synthesize_validates_inputs() {
    let st = state();
    let p = inside(&st, 0);
    let (s, b) = call(
        &st,
        "POST",
        "/synthesize",
        Some(json!({ "shape_id": 0, "material": material(), "position": [0.999, 0.999], "source": "predictor" })),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&b)["error"]["kind"], "outside_shape");

    let mut m = material();
    m["rho"] = json!(1e6);
    let (s, b) = call(&st, "POST", "/synthesize", Some(json!({ "shape_id": 0, "material": m, "position": p, "source": "predictor" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&b)["error"]["kind"], "out_of_range");

    let (s, _) = call(&st, "POST", "/synthesize", Some(json!({ "shape_id": 9, "material": material(), "position": p, "source": "oracle" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call(&st, "POST", "/synthesize", Some(json!({ "shape_id": 0, "material": material(), "position": p, "source": "magic" }))).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn predictor_responses_are_deterministic_and_cached() {
    let st = state();
    let body = json!({ "shape_id": 1, "material": material(), "position": inside(&st, 1), "source": "predictor" });
    let (s1, a) = call(&st, "POST", "/synthesize", Some(body.clone())).await;
    let (s2, b) = call(&st, "POST", "/synthesize", Some(body.clone())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(st.cached_embeddings(), 1);
    let v = parse(&a);
    assert_eq!((v["L"].as_u64(), v["M"].as_u64()), (Some(4), Some(2)));
    let sos: SosBank = serde_json::from_value(json!({ "L": v["L"], "M": v["M"], "sections": v["sections"] })).unwrap();
    assert!(sos.is_stable());

    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let st = st.clone();
            let body = body.clone();
            tokio::spawn(async move { call(&st, "POST", "/synthesize", Some(body)).await.1 })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), a);
    }
}

#[tokio::test]
async fn oracle_returns_modal_data() {
    let st = state();
    let body = json!({ "shape_id": 0, "material": material(), "position": inside(&st, 0), "source": "oracle" });
    let (s, a) = call(&st, "POST", "/synthesize", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    let v = parse(&a);
    let freqs = v["freqs_hz"].as_array().unwrap();
    assert_eq!(freqs.len(), 8);
    assert_eq!(v["sigmas"].as_array().unwrap().len(), 8);
    assert_eq!(v["gains"].as_array().unwrap().len(), 8);
    let f: Vec<f64> = freqs.iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(f.windows(2).all(|w| w[0] <= w[1]) && f[0] > 0.0);
    let (_, b) = call(&st, "POST", "/synthesize", Some(body)).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn fit_source_returns_stable_sections() {
    let st = state();
    let body = json!({ "shape_id": 0, "material": material(), "position": inside(&st, 0), "source": "fit" });
    let (s, a) = call(&st, "POST", "/synthesize", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let v = parse(&a);
    let sos: SosBank = serde_json::from_value(json!({ "L": v["L"], "M": v["M"], "sections": v["sections"] })).unwrap();
    assert_eq!(sos.sections.len(), 8);
    assert!(sos.is_stable());
}

#[tokio::test]
async fn impulse_render_matches_local_recursion() {
    let st = state();
    let req = json!({ "shape_id": 1, "material": material(), "position": inside(&st, 1), "source": "predictor" });
    let (_, syn) = call(&st, "POST", "/synthesize", Some(req.clone())).await;
    let v = parse(&syn);
    let sos: SosBank = serde_json::from_value(json!({ "L": v["L"], "M": v["M"], "sections": v["sections"] })).unwrap();
    let local = sos.render(&AudioBuffer::impulse(2048, 32000)).unwrap().to_wav_bytes().unwrap();

    let mut r = req.clone();
    r["excitation"] = json!("impulse");
    let (s, wav) = call(&st, "POST", "/render", Some(r)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(wav, local);
    // excitation defaults to an impulse
    let (_, wav2) = call(&st, "POST", "/render", Some(req)).await;
    assert_eq!(wav2, local);
}

#[tokio::test]
async fn render_accepts_sample_excitation() {
    use base64::Engine as _;
    let st = state();
    let x: Vec<f32> = (0..512).map(|i| if i % 100 == 0 { 1.0 } else { 0.0 }).collect();
    let b64 = base64::engine::general_purpose::STANDARD.encode(x.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>());
    for source in ["predictor", "oracle"] {
        let req = json!({
            "shape_id": 0, "material": material(), "position": inside(&st, 0), "source": source,
            "excitation": { "samples_b64": b64 },
        });
        let (s, wav) = call(&st, "POST", "/render", Some(req)).await;
        assert_eq!(s, StatusCode::OK, "{source}");
        let audio = AudioBuffer::from_wav_bytes(&wav).unwrap();
        assert_eq!(audio.len(), 512);
        assert!(audio.is_finite() && audio.peak() > 0.0);
    }
    let bad = json!({
        "shape_id": 0, "material": material(), "position": inside(&st, 0), "source": "oracle",
        "excitation": { "samples_b64": "***" },
    });
    let (s, _) = call(&st, "POST", "/render", Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}
