//! HTTP API over the knowledge-graph hypothesis-chain engine.
//!
//! Successful responses are wrapped as `{dataset, revision, data}`; errors are
//! `{code, message, detail}`. Mutating requests that carry an
//! `Idempotency-Key` header are answered once and replayed verbatim on retry.

pub mod dataset;
pub mod error;
mod idempotency;
pub mod routes;
pub mod session;
pub mod state;

use std::net::SocketAddr;

use axum::middleware;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::CorsLayer;

pub use error::{ApiError, ErrorBody};
pub use idempotency::IDEMPOTENCY_HEADER;
pub use routes::Envelope;
pub use state::{AppState, ServerConfig};

/// Every route as (method, path, summary); served at `GET /endpoints`.
pub const ENDPOINTS: &[(&str, &str, &str)] = &[
    ("GET", "/endpoints", "This listing."),
    ("GET", "/datasets", "All registered datasets with load status."),
    (
        "POST",
        "/datasets",
        "Register a dataset {id, entities, triplets, predictions?, embedding?}; loads in the background (202).",
    ),
    (
        "GET",
        "/datasets/{id}",
        "Dataset descriptor: status unloaded|loading|ready|failed, counts, error.",
    ),
    (
        "GET",
        "/search",
        "Top predicted tails: ?dataset=&head=&category=&n= (n defaults to 50).",
    ),
    (
        "POST",
        "/predictions/filter",
        "Filter and re-rank predictions {dataset?, filter, sort?, limit?}.",
    ),
    (
        "GET",
        "/predictions/{dataset}/{id}",
        "One prediction record with its source line.",
    ),
    ("GET", "/embedding/{dataset}", "2-D entity embedding points."),
    (
        "POST",
        "/lasso",
        "Entities inside a polygon {dataset?, polygon, session_id?}.",
    ),
    ("POST", "/sessions", "Start a session on a dataset {dataset?} (201)."),
    (
        "GET",
        "/sessions/{id}",
        "Session state: chat history, chains, match reports, selections.",
    ),
    (
        "POST",
        "/chains",
        "Create a 3-position hypothesis chain {session_id, positions} (201).",
    ),
    ("GET", "/chains/{id}", "One chain."),
    (
        "PUT",
        "/chains/{id}",
        "Edit descriptions, relations or entity sets of all three positions; returns the chain to draft.",
    ),
    (
        "POST",
        "/chains/{id}/preview",
        "Ask the model for entities aligned with one position {position, k?, mode?}.",
    ),
    ("POST", "/chains/{id}/analyze", "Model critique of the chain {mode?}."),
    (
        "POST",
        "/chains/{id}/retrieve",
        "Match the chain against all predictions and star aligned rows.",
    ),
    (
        "GET",
        "/chains/{id}/upset",
        "Rows of one intersection: ?subset=H2,H3&exclusive=true.",
    ),
    (
        "POST",
        "/layout",
        "Stacked Voronoi treemap layers for one prediction {record_id, chain_id?, one_hop?, ...}.",
    ),
    (
        "POST",
        "/chat",
        "One chat turn {session_id, query, mode?, template?, bindings?, record_id?, timeout_ms?}.",
    ),
    (
        "POST",
        "/kg/append",
        "Append triplets {dataset?, triplets, confirm}; refused unless confirm is true.",
    ),
    (
        "POST",
        "/metrics/evaluate",
        "Ranking metrics for ranked lists {ranked_lists | jsonl, metrics?, n?}.",
    ),
];

/// Markdown table of [`ENDPOINTS`], as checked in at `docs/api.md`.
pub fn endpoints_markdown() -> String {
    let mut out = String::from(
        "# HTTP API\n\n\
         Successful responses are `{\"dataset\", \"revision\", \"data\"}`; errors are \
         `{\"code\", \"message\", \"detail\"}` with status 404 (unknown id), 409 (dataset not \
         ready, wrong chain status), 422 (invalid request), 502 (model backend failure) or \
         504 (model timeout). Send an `Idempotency-Key` header on POST/PUT to make retries safe.\n\n\
         | Method | Path | Description |\n|---|---|---|\n",
    );
    for (m, p, s) in ENDPOINTS {
        out.push_str(&format!("| {m} | `{p}` | {s} |\n"));
    }
    out
}

pub fn router(state: AppState) -> Router {
    use routes::*;
    Router::new()
        .route("/endpoints", get(endpoints))
        .route("/datasets", get(list_datasets).post(register_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/search", get(search))
        .route("/predictions/filter", post(filter_predictions))
        .route("/predictions/{dataset}/{id}", get(get_prediction))
        .route("/embedding/{dataset}", get(get_embedding))
        .route("/lasso", post(lasso))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/chains", post(create_chain_h))
        .route("/chains/{id}", get(get_chain).put(put_chain))
        .route("/chains/{id}/preview", post(preview))
        .route("/chains/{id}/analyze", post(analyze))
        .route("/chains/{id}/retrieve", post(retrieve))
        .route("/chains/{id}/upset", get(upset))
        .route("/layout", post(layout))
        .route("/chat", post(chat))
        .route("/kg/append", post(kg_append))
        .route("/metrics/evaluate", post(metrics_evaluate))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), idempotency::layer))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
