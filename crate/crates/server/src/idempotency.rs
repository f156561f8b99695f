use axum::body::{to_bytes, Body};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, Method};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};

use crate::error::ApiError;
use crate::state::{AppState, CachedResponse};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
/// Set on responses replayed from the cache.
pub const REPLAY_HEADER: &str = "idempotent-replay";

/// Caches the first final (non-5xx) response per (method, path, key) and
/// replays it for retries. Concurrent retries wait for the first to finish.
pub async fn layer(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let mutating = matches!(*req.method(), Method::POST | Method::PUT | Method::DELETE);
    let key = req
        .headers()
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned);
    let (true, Some(key)) = (mutating, key) else {
        return next.run(req).await;
    };
    let cache_key = format!("{} {} {}", req.method(), req.uri(), key);
    let slot = state.idempotency_slot(&cache_key);
    let mut cached = slot.lock().await;
    if let Some(c) = cached.as_ref() {
        let mut resp = Response::builder().status(c.status);
        if let Some(ct) = &c.content_type {
            resp = resp.header(header::CONTENT_TYPE, ct);
        }
        return resp
            .header(REPLAY_HEADER, HeaderValue::from_static("true"))
            .body(Body::from(c.body.clone()))
            .unwrap_or_else(|e| ApiError::internal(e.to_string()).into_response());
    }
    let resp = next.run(req).await;
    let (parts, body) = resp.into_parts();
    let bytes = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    if parts.status.is_server_error() {
        // let the client retry for real
        drop(cached);
        state.forget_idempotency(&cache_key);
    } else {
        *cached = Some(CachedResponse {
            status: parts.status.as_u16(),
            content_type: parts
                .headers
                .get(header::CONTENT_TYPE)
                .and_then(|v| v.to_str().ok())
                .map(str::to_owned),
            body: bytes.to_vec(),
        });
    }
    Response::from_parts(parts, Body::from(bytes))
}
