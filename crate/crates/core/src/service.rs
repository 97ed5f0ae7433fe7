//! HTTP API over stored datasets and specs.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/datasets` | multipart `schema`, `records`, optional `name`; 201 with a handle |
//! | GET | `/datasets/{id}/schema` | canonical schema document |
//! | POST | `/datasets/{id}/query` | spec text in, view document out |
//! | PUT | `/specs/{id}` | store a spec version |
//! | GET | `/specs/{id}` | latest canonical spec text (`?version=n` for older ones) |
//!
//! Errors are `{"code", "message", "violations": [{"kind", "message"}]}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::dataset::{ingest, Dataset, IngestError};
use crate::engine::{evaluate, QueryError};
use crate::spec::{parse_spec, Violation};
use crate::store::{load_dataset_dir, valid_spec_id, write_dataset_dir, DatasetHandle, SpecStore, StoreError};
use crate::view::to_json;

pub const DEFAULT_PORT: u16 = 8789;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 2 * 1024 * 1024 * 1024;

struct Entry {
    dataset: Arc<Dataset>,
    handle: DatasetHandle,
}

pub struct AppState {
    datasets_dir: PathBuf,
    datasets: RwLock<HashMap<String, Arc<Entry>>>,
    specs: SpecStore,
}

impl AppState {
    /// Opens `data_dir`, loading every dataset stored under it.
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        let datasets_dir = data_dir.join("datasets");
        let mut datasets = HashMap::new();
        if let Ok(entries) = std::fs::read_dir(&datasets_dir) {
            let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
            dirs.sort();
            for dir in dirs {
                let (dataset, handle) = load_dataset_dir(&dir)?;
                datasets.insert(
                    handle.id.clone(),
                    Arc::new(Entry {
                        dataset: Arc::new(dataset),
                        handle,
                    }),
                );
            }
        }
        Ok(AppState {
            datasets_dir,
            datasets: RwLock::new(datasets),
            specs: SpecStore::new(data_dir.join("specs")),
        })
    }

    fn entry(&self, id: &str) -> Option<Arc<Entry>> {
        self.datasets.read().expect("lock poisoned").get(id).cloned()
    }
}

#[derive(Debug, Serialize)]
struct ViolationDoc {
    kind: String,
    message: String,
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    code: &'static str,
    message: String,
    violations: Vec<ViolationDoc>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }

    fn spec_violations(violations: Vec<Violation>) -> Self {
        let mut e = ApiError::new(StatusCode::BAD_REQUEST, "invalid_spec", "spec is not valid for this dataset");
        e.violations = violations
            .iter()
            .map(|v| ViolationDoc {
                kind: v.kind().to_string(),
                message: v.to_string(),
            })
            .collect();
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(&self)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, "invalid_dataset", e.to_string());
        err.violations = e
            .violations()
            .into_iter()
            .map(|message| ViolationDoc {
                kind: "ingest".to_string(),
                message,
            })
            .collect();
        err
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Invalid(v) => ApiError::spec_violations(v),
            QueryError::ZeroMass => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "zero_mass", e.to_string()),
            other => ApiError::new(StatusCode::BAD_REQUEST, "invalid_spec", other.to_string()),
        }
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn upload_dataset(State(state): State<Arc<AppState>>, mut multipart: Multipart) -> Result<Response, ApiError> {
    let mut schema = None;
    let mut records = None;
    let mut name = None;
    let mut records_file_name = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let field_name = field.name().unwrap_or_default().to_string();
        match field_name.as_str() {
            "schema" => schema = Some(field.bytes().await.map_err(multipart_error)?),
            "records" => {
                records_file_name = field.file_name().map(str::to_string);
                records = Some(field.bytes().await.map_err(multipart_error)?);
            }
            "name" => name = Some(field.text().await.map_err(multipart_error)?),
            other => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "bad_request",
                    format!("unexpected form field {other:?}"),
                ))
            }
        }
    }
    let missing = |what| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("missing form field {what:?}"));
    let schema = schema.ok_or_else(|| missing("schema"))?;
    let records = records.ok_or_else(|| missing("records"))?;
    let name = name
        .or(records_file_name)
        .unwrap_or_else(|| "dataset".to_string());

    let id = uuid::Uuid::new_v4().simple().to_string();
    let dir = state.datasets_dir.join(&id);
    let (dataset, handle) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let dataset = ingest(&schema, &records)?;
        let handle = DatasetHandle::for_dataset(id, name, &dataset);
        write_dataset_dir(&dir, &dataset, &handle).map_err(ApiError::internal)?;
        Ok((dataset, handle))
    })
    .await
    .map_err(ApiError::internal)??;

    let body = serde_json::to_string(&handle).expect("handle serializes");
    state.datasets.write().expect("lock poisoned").insert(
        handle.id.clone(),
        Arc::new(Entry {
            dataset: Arc::new(dataset),
            handle,
        }),
    );
    Ok(json_response(StatusCode::CREATED, body))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    let status = e.status();
    let code = if status == StatusCode::PAYLOAD_TOO_LARGE { "payload_too_large" } else { "bad_request" };
    ApiError::new(status, code, e.body_text())
}

fn unknown_dataset(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown dataset {id:?}"))
}

async fn dataset_schema(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let entry = state.entry(&id).ok_or_else(|| unknown_dataset(&id))?;
    Ok(json_response(StatusCode::OK, entry.dataset.schema_json()))
}

async fn query(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> Result<Response, ApiError> {
    let entry = state.entry(&id).ok_or_else(|| unknown_dataset(&id))?;
    debug_assert_eq!(entry.handle.id, id);
    let spec = parse_spec(&body).map_err(|e| ApiError::spec_violations(vec![Violation::from(e)]))?;
    let document = tokio::task::spawn_blocking(move || {
        evaluate(&entry.dataset, &spec).map(|view| to_json(&view, &spec))
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(json_response(StatusCode::OK, document))
}

#[derive(Serialize)]
struct StoredSpec<'a> {
    id: &'a str,
    version: u64,
}

fn check_spec_id(id: &str) -> Result<(), ApiError> {
    if valid_spec_id(id) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_request",
            "spec ids are 1-128 characters of A-Z, a-z, 0-9, '_' and '-'",
        ))
    }
}

async fn put_spec(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> Result<Response, ApiError> {
    check_spec_id(&id)?;
    let spec = parse_spec(&body).map_err(|e| {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, "invalid_spec", e.to_string());
        let v = Violation::from(e);
        err.violations.push(ViolationDoc {
            kind: v.kind().to_string(),
            message: v.to_string(),
        });
        err
    })?;
    let version = tokio::task::spawn_blocking(move || state.specs.put(&id, &spec).map(|v| (id, v)))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    let body = serde_json::to_string(&StoredSpec {
        id: &version.0,
        version: version.1,
    })
    .expect("serializes");
    Ok(json_response(StatusCode::CREATED, body))
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u64>,
}

async fn get_spec(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<VersionQuery>,
) -> Result<Response, ApiError> {
    check_spec_id(&id)?;
    match state.specs.get(&id, q.version).map_err(ApiError::internal)? {
        Some((_, text)) => Ok(json_response(StatusCode::OK, text)),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown spec {id:?}"))),
    }
}

/// The service routes. Request bodies above `max_upload_bytes` get 413.
pub fn router(state: Arc<AppState>, max_upload_bytes: usize) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}/schema", get(dataset_schema))
        .route("/datasets/{id}/query", post(query))
        .route("/specs/{id}", get(get_spec).put(put_spec))
        .layer(DefaultBodyLimit::max(max_upload_bytes))
        .with_state(state)
}

/// Binds `127.0.0.1:port` (0 picks a free port). The listener is returned
/// so callers can report the bound address before serving.
pub async fn bind(port: u16) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port))).await
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>, max_upload_bytes: usize) -> std::io::Result<()> {
    axum::serve(listener, router(state, max_upload_bytes)).await
}
