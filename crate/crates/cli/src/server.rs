//! HTTP/JSON service: shape listing, occupancy grids, filter synthesis and WAV rendering.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use modalbank::dataset::Dataset;
use modalbank::elastodynamics::{assemble, modal_gains, solve_modes, MaterialRanges};
use modalbank::modal_render::{excite, render_ir};
use modalbank::optim::{fit, FitBudget};
use modalbank::predictor::{ConditioningInput, Predictor, ShapeEmbedding};
use modalbank::{AudioBuffer, ConvexShape, Error, Material, Point, SosBank, SpectralConfig, SpectralContext, Topology};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::config::ServeSection;

pub struct AppState {
    pub dataset: Option<Dataset>,
    pub predictor: Option<Predictor>,
    pub spectral: SpectralConfig,
    pub ranges: MaterialRanges,
    pub opts: ServeSection,
    pub seed: u64,
    embeddings: RwLock<Arc<HashMap<usize, Arc<ShapeEmbedding>>>>,
    workers: Semaphore,
}

impl AppState {
    /// Spectral settings and ranges come from the dataset when present, otherwise from
    /// the checkpoint, otherwise from `spectral`/`ranges`.
    pub fn new(
        dataset: Option<Dataset>,
        predictor: Option<Predictor>,
        spectral: SpectralConfig,
        ranges: MaterialRanges,
        opts: ServeSection,
        seed: u64,
    ) -> Arc<Self> {
        let (spectral, ranges) = match (&dataset, &predictor) {
            (Some(d), _) => (d.manifest.spectral, d.manifest.ranges),
            (None, Some(p)) => (p.spectral, p.ranges),
            _ => (spectral, ranges),
        };
        let workers = Semaphore::new(opts.workers.max(1));
        Arc::new(AppState {
            dataset,
            predictor,
            spectral,
            ranges,
            opts,
            seed,
            embeddings: RwLock::new(Arc::new(HashMap::new())),
            workers,
        })
    }

    /// Read-mostly cache: readers clone the current map pointer, inserts copy the map.
    fn embedding(&self, model: &Predictor, shape_id: usize, ds: &Dataset) -> Result<Arc<ShapeEmbedding>, ApiError> {
        if let Some(e) = self.embeddings.read().unwrap().get(&shape_id) {
            return Ok(e.clone());
        }
        let e = Arc::new(model.encode(&ds.occupancy(shape_id)?));
        let mut guard = self.embeddings.write().unwrap();
        let mut next = HashMap::clone(&guard);
        let e = next.entry(shape_id).or_insert(e).clone();
        *guard = Arc::new(next);
        Ok(e)
    }

    pub fn cached_embeddings(&self) -> usize {
        self.embeddings.read().unwrap().len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, kind, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::OutOfDomain { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "out_of_domain"),
            Error::InvalidArgument(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument"),
            e => (StatusCode::INTERNAL_SERVER_ERROR, crate::error_kind(e)),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "kind": self.kind, "message": self.message } }))).into_response()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Predictor,
    Fit,
    Oracle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeRequest {
    pub shape_id: usize,
    pub material: Material,
    pub position: [f64; 2],
    pub source: Source,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Excitation {
    Named(ExcitationName),
    /// Float32 little-endian samples, base64 encoded.
    Samples { samples_b64: String },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExcitationName {
    Impulse,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub shape_id: usize,
    pub material: Material,
    pub position: [f64; 2],
    pub source: Source,
    #[serde(default = "default_excitation")]
    pub excitation: Excitation,
}

fn default_excitation() -> Excitation {
    Excitation::Named(ExcitationName::Impulse)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SynthesizeResponse {
    Filter {
        source: Source,
        #[serde(rename = "L")]
        l: usize,
        #[serde(rename = "M")]
        m: usize,
        sections: Vec<[f64; 5]>,
        sample_rate: u32,
    },
    Modal {
        source: Source,
        freqs_hz: Vec<f64>,
        sigmas: Vec<f64>,
        gains: Vec<f64>,
        sample_rate: u32,
    },
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/shapes", get(list_shapes))
        .route("/shapes/{id}/occupancy", get(occupancy))
        .route("/synthesize", post(synthesize))
        .route("/render", post(render))
        .with_state(state)
}

fn dataset(state: &AppState) -> Result<&Dataset, ApiError> {
    state
        .dataset
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", "server was started without a dataset"))
}

fn shape(state: &AppState, id: usize) -> Result<ConvexShape, ApiError> {
    let ds = dataset(state)?;
    if ds.shape_index(id).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown shape {id}")));
    }
    Ok(ds.shape(id)?)
}

async fn list_shapes(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let shapes: Vec<_> = state
        .dataset
        .iter()
        .flat_map(|d| d.manifest.shapes.iter())
        .map(|s| json!({ "id": s.id, "vertices": s.vertices }))
        .collect();
    Json(json!({
        "shapes": shapes,
        "ranges": state.ranges,
        "sample_rate": state.spectral.sample_rate,
        "n_samples": state.spectral.n_samples,
        "sources": {
            "predictor": state.predictor.is_some(),
            "fit": state.dataset.is_some(),
            "oracle": state.dataset.is_some(),
        },
    }))
}

async fn occupancy(State(state): State<Arc<AppState>>, Path(id): Path<usize>) -> Result<Json<serde_json::Value>, ApiError> {
    let s = shape(&state, id)?;
    let grid = dataset(&state)?.occupancy(id)?;
    Ok(Json(json!({
        "id": id,
        "size": modalbank::geometry::GRID_SIZE,
        "rows": grid.rows(),
        "vertices": s.vertices(),
    })))
}

struct Validated {
    shape_id: usize,
    material: Material,
    position: Point,
}

fn validate(state: &AppState, shape_id: usize, material: &Material, position: [f64; 2]) -> Result<Validated, ApiError> {
    let s = shape(state, shape_id)?;
    material.validate()?;
    if !state.ranges.contains(material) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "out_of_range",
            format!("material {material:?} outside the ranges {:?}", state.ranges),
        ));
    }
    let p = Point::new(position[0], position[1]);
    if !p.x.is_finite() || !p.y.is_finite() || !s.contains(p) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "outside_shape",
            format!("position ({}, {}) lies outside shape {shape_id}", p.x, p.y),
        ));
    }
    Ok(Validated { shape_id, material: *material, position: p })
}

struct OracleModes {
    omegas: Vec<f64>,
    sigmas: Vec<f64>,
    gains: Vec<f64>,
    ir: AudioBuffer,
}

fn solve_oracle(state: &AppState, v: &Validated) -> modalbank::Result<OracleModes> {
    let ds = state.dataset.as_ref().expect("validated");
    let mesh = ds.mesh(v.shape_id)?;
    let sys = assemble(&mesh, &v.material)?;
    let model = solve_modes(&sys, &v.material, state.opts.n_modes)?;
    let gains = modal_gains(&model, v.position, state.opts.direction)?;
    let ir = render_ir(&model, &gains, &state.spectral)?;
    Ok(OracleModes { omegas: model.omegas.clone(), sigmas: model.sigmas.clone(), gains, ir })
}

/// Runs FEM-bound work on the blocking pool, at most `workers` at a time.
async fn blocking<T: Send + 'static>(
    state: &Arc<AppState>,
    f: impl FnOnce(&AppState) -> modalbank::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    let _permit = state.workers.acquire().await.expect("semaphore never closed");
    let st = state.clone();
    tokio::task::spawn_blocking(move || f(&st))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn synthesize_inner(
    state: &Arc<AppState>,
    shape_id: usize,
    material: Material,
    position: [f64; 2],
    source: Source,
) -> Result<(SynthesizeResponse, Option<AudioBuffer>), ApiError> {
    let v = validate(state, shape_id, &material, position)?;
    let sr = state.spectral.sample_rate;
    match source {
        Source::Predictor => {
            let model = state.predictor.as_ref().ok_or_else(|| {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unavailable", "server was started without a checkpoint")
            })?;
            let emb = state.embedding(model, v.shape_id, dataset(state)?)?;
            let cond = ConditioningInput::new(&v.material, v.position, &model.ranges);
            let sos = model.predict(&emb, &cond)?.to_sos();
            Ok((filter_response(source, sos, sr), None))
        }
        Source::Fit => {
            let sos = blocking(state, move |st| {
                let oracle = solve_oracle(st, &v)?;
                let ctx = SpectralContext::new(st.spectral)?;
                let budget = FitBudget { max_steps: st.opts.fit_steps, seed: st.seed, ..Default::default() };
                Ok(fit(&oracle.ir, st.opts.fit_topology, &ctx, &budget)?.params.to_sos())
            })
            .await?;
            Ok((filter_response(source, sos, sr), None))
        }
        Source::Oracle => {
            let o = blocking(state, move |st| solve_oracle(st, &v)).await?;
            let freqs_hz = o.omegas.iter().map(|w| w / (2.0 * std::f64::consts::PI)).collect();
            Ok((SynthesizeResponse::Modal { source, freqs_hz, sigmas: o.sigmas, gains: o.gains, sample_rate: sr }, Some(o.ir)))
        }
    }
}

fn filter_response(source: Source, sos: SosBank, sample_rate: u32) -> SynthesizeResponse {
    let Topology { l, m } = sos.topology;
    SynthesizeResponse::Filter { source, l, m, sections: sos.sections, sample_rate }
}

async fn synthesize(
    State(state): State<Arc<AppState>>,
    Json(req): Json<SynthesizeRequest>,
) -> Result<Json<SynthesizeResponse>, ApiError> {
    let (resp, _) = synthesize_inner(&state, req.shape_id, req.material, req.position, req.source).await?;
    Ok(Json(resp))
}

fn decode_excitation(e: &Excitation, n: usize, sample_rate: u32) -> Result<AudioBuffer, ApiError> {
    match e {
        Excitation::Named(ExcitationName::Impulse) => Ok(AudioBuffer::impulse(n, sample_rate)),
        Excitation::Samples { samples_b64 } => {
            let bytes = base64::engine::general_purpose::STANDARD.decode(samples_b64).map_err(|err| {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument", format!("bad base64: {err}"))
            })?;
            if bytes.is_empty() || bytes.len() % 4 != 0 {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_argument",
                    "excitation must be a nonempty float32 little-endian array",
                ));
            }
            let samples: Vec<f64> =
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
            if samples.iter().any(|s| !s.is_finite()) {
                return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument", "non-finite excitation"));
            }
            Ok(AudioBuffer::new(samples, sample_rate))
        }
    }
}

async fn render(State(state): State<Arc<AppState>>, Json(req): Json<RenderRequest>) -> Result<Response, ApiError> {
    let x = decode_excitation(&req.excitation, state.spectral.n_samples, state.spectral.sample_rate)?;
    let (resp, ir) = synthesize_inner(&state, req.shape_id, req.material, req.position, req.source).await?;
    let audio = match resp {
        SynthesizeResponse::Filter { l, m, sections, .. } => {
            let sos = SosBank { topology: Topology::new(l, m)?, sections };
            sos.render(&x)?
        }
        SynthesizeResponse::Modal { .. } => {
            let ir = ir.expect("oracle render");
            match req.excitation {
                Excitation::Named(ExcitationName::Impulse) => ir,
                Excitation::Samples { .. } => excite(&ir, &x)?,
            }
        }
    };
    let wav = audio.to_wav_bytes()?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], wav).into_response())
}
