//! HTTP front end.
//!
//! | route               | behaviour                                              |
//! |---------------------|--------------------------------------------------------|
//! | `POST /caption`     | multipart `image` + `metadata` (JSON) → 202 `{job_id}` |
//! | `GET /result/{id}`  | job status and, once terminal, the pipeline result     |
//! | `GET /healthz`      | liveness                                               |
//! | `GET /metrics`      | Prometheus-style text                                  |

use std::net::SocketAddr;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;

use crate::domain::{FieldError, ImageMetadata};
use crate::service::queue::{JobStatus, Service, SubmitError};

/// Largest accepted upload.
pub const MAX_UPLOAD_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug, Serialize)]
struct Accepted {
    job_id: String,
    status: JobStatus,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

fn error(status: StatusCode, msg: impl Into<String>, fields: Vec<FieldError>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: msg.into(),
            fields,
        }),
    )
        .into_response()
}

fn field(name: &str, problem: impl Into<String>) -> FieldError {
    FieldError {
        field: name.to_string(),
        problem: problem.into(),
    }
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/caption", post(caption))
        .route("/result/{id}", get(result))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(addr: &str, service: Service) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local: SocketAddr = listener.local_addr()?;
    tracing::info!("listening on http://{local}");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn caption(State(svc): State<Service>, mut form: Multipart) -> Response {
    let mut image: Option<Vec<u8>> = None;
    let mut meta_raw: Option<Vec<u8>> = None;
    loop {
        match form.next_field().await {
            Ok(Some(f)) => {
                let name = f.name().unwrap_or_default().to_string();
                let data = match f.bytes().await {
                    Ok(b) => b,
                    Err(e) => return error(StatusCode::BAD_REQUEST, format!("multipart: {e}"), vec![]),
                };
                match name.as_str() {
                    "image" => image = Some(data.to_vec()),
                    "metadata" => meta_raw = Some(data.to_vec()),
                    _ => {}
                }
            }
            Ok(None) => break,
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("multipart: {e}"), vec![]),
        }
    }

    let mut missing = Vec::new();
    if image.as_ref().is_none_or(|b| b.is_empty()) {
        missing.push(field("image", "missing or empty"));
    }
    if meta_raw.is_none() {
        missing.push(field("metadata", "missing"));
    }
    if !missing.is_empty() {
        return error(StatusCode::BAD_REQUEST, "incomplete request", missing);
    }
    let meta: ImageMetadata = match serde_json::from_slice(&meta_raw.unwrap()) {
        Ok(m) => m,
        Err(e) => {
            return error(
                StatusCode::BAD_REQUEST,
                "metadata is not valid JSON for ImageMetadata",
                vec![field("metadata", e.to_string())],
            )
        }
    };

    match svc.submit(image.unwrap(), meta).await {
        Ok(job_id) => (
            StatusCode::ACCEPTED,
            Json(Accepted {
                job_id,
                status: JobStatus::Queued,
            }),
        )
            .into_response(),
        Err(SubmitError::Invalid(fields)) => error(StatusCode::BAD_REQUEST, "invalid metadata", fields),
        Err(e @ SubmitError::Busy(_)) => {
            let mut r = error(StatusCode::SERVICE_UNAVAILABLE, e.to_string(), vec![]);
            r.headers_mut()
                .insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
            r
        }
    }
}

async fn result(State(svc): State<Service>, Path(id): Path<String>) -> Response {
    match svc.get_result(&id) {
        Ok(view) => Json(view).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, e.to_string(), vec![]),
    }
}

async fn healthz(State(svc): State<Service>) -> Response {
    Json(json!({
        "status": "ok",
        "in_flight": svc.metrics().in_flight(),
        "max_in_flight": svc.max_in_flight(),
    }))
    .into_response()
}

async fn metrics(State(svc): State<Service>) -> Response {
    (
        [(header::CONTENT_TYPE, "text/plain; version=0.0.4")],
        svc.metrics().render_text(),
    )
        .into_response()
}
