//! HTTP service over the run store.
//!
//! | route | |
//! |---|---|
//! | `POST /datasets` | CSV transaction log in the body; returns its id and row counts |
//! | `POST /weights` | a pairwise matrix or a weights section; returns weights and consistency |
//! | `POST /runs` | `{dataset_id, config?}`; `config` is merged onto the defaults |
//! | `GET /runs`, `GET /runs/{id}` | run status |
//! | `GET /runs/{id}/outputs[/{name}]` | output listing and files |
//! | `POST /runs/{id}/rerun` | `{patch}`; a child run reusing unchanged stages |
//!
//! Rejected payloads get a JSON body `{error, message, fields: [{path, message}]}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tempseg_core::ingest::{parse_transactions, FormatConfig};
use tempseg_core::mcdm::{self, PairwiseMatrix, WeightVector};
use tempseg_core::Exec;

use crate::config::{RunConfig, Stage, WeightsSection};
use crate::run;
use crate::store::{RunFailure, RunState, RunStore, StageRecord};

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: RunStore,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError { status, code, message: message.into(), fields: Vec::new() }
    }

    fn not_found(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn invalid(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_value", message)
    }

    fn field(mut self, path: impl Into<String>, message: impl Into<String>) -> ApiError {
        self.fields.push(FieldError { path: path.into(), message: message.into() });
        self
    }

    fn internal(e: anyhow::Error) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("{e:#}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.code, "message": self.message, "fields": self.fields });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Decodes a JSON body, reporting the path of the offending field.
fn decode<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let value: Value = serde_json::from_slice(body).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", format!("body is not valid JSON: {e}"))
            .field("", e.to_string())
    })?;
    decode_value(value)
}

fn decode_value<T: DeserializeOwned>(value: Value) -> ApiResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        // the root path prints as "."
        let path = e.path().to_string().trim_start_matches('.').to_string();
        let message = e.inner().to_string();
        ApiError::invalid(format!("invalid field `{path}`: {message}")).field(path, message)
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/datasets", post(post_dataset))
        .route("/weights", post(post_weights))
        .route("/runs", post(post_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/outputs", get(list_outputs))
        .route("/runs/{id}/outputs/{name}", get(get_output))
        .route("/runs/{id}/rerun", post(post_rerun))
        .with_state(Arc::new(state))
}

pub async fn serve(state: AppState, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> anyhow::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.into()))?.map_err(ApiError::internal)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetCreated {
    pub dataset_id: String,
    pub rows_read: usize,
    pub rows_kept: usize,
    pub customers: usize,
}

async fn post_dataset(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<DatasetCreated>)> {
    if body.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_body", "expected a CSV transaction log").field("", "empty body"));
    }
    let (records, report) = parse_transactions(body.as_ref(), &FormatConfig::default())
        .map_err(|e| ApiError::invalid(format!("transaction log rejected: {e}")).field("", e.to_string()))?;
    if records.is_empty() {
        return Err(ApiError::invalid("no row survived cleaning").field("", format!("{} rows read, none kept", report.rows_read)));
    }
    let mut customers: Vec<&str> = records.iter().map(|r| r.customer_id.as_str()).collect();
    customers.sort_unstable();
    customers.dedup();
    let customers = customers.len();
    let store = st.store.clone();
    let dataset_id = blocking(move || store.put_dataset(&body)).await?;
    Ok((
        StatusCode::CREATED,
        Json(DatasetCreated { dataset_id, rows_read: report.rows_read, rows_kept: report.rows_kept, customers }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WeightsResponse {
    #[serde(flatten)]
    pub weights: WeightVector,
    /// Per-dimension sums over the criteria that are panel features.
    pub dimension_totals: Option<BTreeMap<String, f64>>,
    /// CR of each dimension-level and within-dimension matrix.
    pub matrices: Vec<(String, f64)>,
}

/// Accepts a bare `{criteria, matrix}` judgment matrix over any criteria,
/// or a tagged weights section. A bare matrix is always answered,
/// consistent or not.
async fn post_weights(body: Bytes) -> ApiResult<Json<WeightsResponse>> {
    let value: Value = decode(&body)?;
    let rejected = |e: anyhow::Error| ApiError::invalid(format!("{e:#}")).field("", format!("{e:#}"));
    let (vector, matrices) = if value.get("mode").is_some() {
        let section: WeightsSection = decode_value(value)?;
        let resolved = section.resolve().map_err(rejected)?;
        let mut matrices = Vec::new();
        if let Some(h) = &resolved.hierarchy {
            matrices.push(("dimensions".to_string(), h.dimensions.consistency_ratio));
            for (d, w) in &h.within {
                matrices.push((d.to_string(), w.consistency_ratio));
            }
        } else {
            matrices.push(("criteria".to_string(), resolved.vector.consistency_ratio));
        }
        (resolved.vector, matrices)
    } else {
        let matrix: PairwiseMatrix = decode_value(value)?;
        let w = mcdm::principal_weights(&matrix).map_err(|e| rejected(e.into()))?;
        let cr = w.consistency_ratio;
        (w, vec![("criteria".to_string(), cr)])
    };
    let totals = vector.dimension_totals();
    let dimension_totals = (!totals.is_empty()).then(|| totals.into_iter().map(|(d, w)| (d.to_string(), w)).collect());
    Ok(Json(WeightsResponse { weights: vector, dimension_totals, matrices }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    dataset_id: String,
    #[serde(default)]
    config: Option<Value>,
    #[serde(default)]
    until: Option<Stage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RerunRequest {
    #[serde(default)]
    patch: Value,
    #[serde(default)]
    until: Option<Stage>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub parent: Option<String>,
    pub dataset: String,
    pub seed: u64,
    pub state: RunState,
    pub completed_stages: usize,
    pub total_stages: usize,
    pub stages: Vec<StageRecord>,
    pub error: Option<RunFailure>,
}

fn status(store: &RunStore, run_id: &str) -> ApiResult<RunStatus> {
    if !store.has_run(run_id) {
        return Err(ApiError::not_found(format!("unknown run {run_id}")));
    }
    let m = store.manifest(run_id).map_err(ApiError::internal)?;
    Ok(RunStatus {
        completed_stages: m.completed_stages(),
        total_stages: m.stages.len(),
        run_id: m.run_id,
        parent: m.parent,
        dataset: m.dataset,
        seed: m.seed,
        state: m.state,
        stages: m.stages,
        error: m.error,
    })
}

/// `patch` merged onto the JSON form of `base`, with field paths on error.
fn merged_config(base: &RunConfig, patch: &Value, prefix: &str) -> ApiResult<RunConfig> {
    let mut doc = serde_json::to_value(base).map_err(|e| ApiError::internal(e.into()))?;
    json_patch::merge(&mut doc, patch);
    let config: RunConfig = decode_value(doc).map_err(|mut e| {
        for f in &mut e.fields {
            f.path = format!("{prefix}.{}", f.path);
        }
        e
    })?;
    config.validate().map_err(|e| ApiError::invalid(format!("{e:#}")).field(prefix, format!("{e:#}")))?;
    Ok(config)
}

fn launch(st: &Arc<AppState>, run_id: String, until: Stage) {
    let store = st.store.clone();
    let exec = st.exec;
    tokio::task::spawn_blocking(move || {
        if let Err(e) = run::execute(&store, &run_id, until, exec) {
            log::warn!("run {run_id}: {e:#}");
        }
    });
}

async fn post_run(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<RunStatus>)> {
    let req: RunRequest = decode(&body)?;
    if !st.store.has_dataset(&req.dataset_id) {
        return Err(ApiError::not_found(format!("unknown dataset {}", req.dataset_id)).field("dataset_id", "no such dataset"));
    }
    let config = merged_config(&RunConfig::default(), &req.config.unwrap_or(Value::Null), "config")?;
    let m = run::submit(&st.store, &req.dataset_id, config, None).map_err(ApiError::internal)?;
    let s = status(&st.store, &m.run_id)?;
    if s.state != RunState::Completed {
        launch(&st, m.run_id, req.until.unwrap_or(Stage::Report));
    }
    Ok((StatusCode::ACCEPTED, Json(s)))
}

async fn post_rerun(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<(StatusCode, Json<RunStatus>)> {
    let req: RerunRequest = if body.is_empty() { RerunRequest { patch: Value::Null, until: None } } else { decode(&body)? };
    let parent = status(&st.store, &id)?;
    let base = st.store.manifest(&parent.run_id).map_err(ApiError::internal)?;
    let config = merged_config(&base.config, &req.patch, "patch")?;
    let m = run::submit(&st.store, &base.dataset, config, Some(base.run_id.clone())).map_err(ApiError::internal)?;
    let s = status(&st.store, &m.run_id)?;
    if s.state != RunState::Completed {
        launch(&st, m.run_id, req.until.unwrap_or(Stage::Report));
    }
    Ok((StatusCode::ACCEPTED, Json(s)))
}

async fn list_runs(State(st): State<Arc<AppState>>) -> ApiResult<Json<Vec<RunStatus>>> {
    let ids = st.store.list_runs().map_err(ApiError::internal)?;
    ids.iter().map(|id| status(&st.store, id)).collect::<ApiResult<Vec<_>>>().map(Json)
}

async fn get_run(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<RunStatus>> {
    status(&st.store, &id).map(Json)
}

async fn list_outputs(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    status(&st.store, &id)?;
    let names = run::output_names(&st.store, &id).map_err(ApiError::internal)?;
    let map: serde_json::Map<String, Value> = names.into_iter().map(|(s, files)| (s.to_string(), json!(files))).collect();
    Ok(Json(Value::Object(map)))
}

async fn get_output(State(st): State<Arc<AppState>>, Path((id, name)): Path<(String, String)>) -> ApiResult<Response> {
    status(&st.store, &id)?;
    let bytes = run::output_file(&st.store, &id, &name).map_err(|e| ApiError::not_found(format!("{e:#}")))?;
    let content_type = match name.rsplit('.').next() {
        Some("json") => "application/json",
        Some("csv") => "text/csv",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}
