#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use cmx::service::{router, AppState};

pub fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel)
}

pub fn fixture(rel: &str) -> Vec<u8> {
    std::fs::read(data_path(rel)).unwrap()
}

pub const BOUNDARY: &str = "cmx-test-boundary";

/// A multipart/form-data body; `None` file names make plain fields.
pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, file_name, data) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match file_name {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\n\r\n").as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub struct TestService {
    pub dir: tempfile::TempDir,
    pub app: Router,
}

impl TestService {
    pub fn new(limit: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let app = Self::open(dir.path(), limit);
        TestService { dir, app }
    }

    pub fn open(path: &std::path::Path, limit: usize) -> Router {
        router(Arc::new(AppState::open(path).unwrap()), limit)
    }

    pub async fn send(&self, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
        send(&self.app, method, uri, content_type, body).await
    }

    pub async fn upload(&self, schema: &[u8], records: &[u8]) -> (StatusCode, serde_json::Value) {
        let body = multipart(&[("schema", Some("schema.json"), schema), ("records", Some("records.ndjson"), records)]);
        let (status, bytes) = self
            .send(
                Method::POST,
                "/datasets",
                Some(&format!("multipart/form-data; boundary={BOUNDARY}")),
                body,
            )
            .await;
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    pub async fn query(&self, id: &str, spec: &[u8]) -> (StatusCode, Vec<u8>) {
        self.send(Method::POST, &format!("/datasets/{id}/query"), Some("application/json"), spec.to_vec())
            .await
    }
}

pub async fn send(app: &Router, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let mut request = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        request = request.header(header::CONTENT_TYPE, ct);
    }
    let response = app.clone().oneshot(request.body(Body::from(body)).unwrap()).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}
