use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use kgchain_core::chain::{ChainError, SubsetParseError};
use kgchain_core::gateway::GatewayError;
use kgchain_core::graph::{GraphError, ResolveError};
use kgchain_core::layout::LayoutError;
use kgchain_core::metrics::MetricError;
use kgchain_core::predictions::{FilterError, PredictionError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::session::SessionError;

/// Wire form of every error: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_owned(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} {id:?}"))
            .with_detail(json!({ "kind": what, "id": id }))
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let status = match &e {
            GatewayError::Render(_) | GatewayError::Contract(_) => StatusCode::UNPROCESSABLE_ENTITY,
            GatewayError::Timeout { .. } => StatusCode::GATEWAY_TIMEOUT,
            GatewayError::Backend { .. } | GatewayError::Parse(_) => StatusCode::BAD_GATEWAY,
        };
        let code = format!("gateway_{}", e.kind());
        Self::new(status, &code, e.to_string())
    }
}

impl From<ChainError> for ApiError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::Gateway(g) => g.into(),
            ChainError::Status(_) => Self::conflict("chain_status", e.to_string()),
            ChainError::Payload(_) => Self::new(StatusCode::BAD_GATEWAY, "gateway_payload", e.to_string()),
            ChainError::Position(_) => Self::not_found("position", &e.to_string()),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "chain_invalid", e.to_string()),
        }
    }
}

impl From<SubsetParseError> for ApiError {
    fn from(e: SubsetParseError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<PredictionError> for ApiError {
    fn from(e: PredictionError) -> Self {
        match &e {
            PredictionError::UnknownHead(id) => Self::not_found("head", id),
            PredictionError::UnknownRecord(id) => Self::not_found("record", &id.to_string()),
            PredictionError::DatasetMismatch { .. } => Self::conflict("dataset_mismatch", e.to_string()),
            _ => Self::invalid(e.to_string()),
        }
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        match &e {
            GraphError::UnknownEntity(id) => Self::not_found("entity", id),
            _ => Self::invalid(e.to_string()),
        }
    }
}

impl From<ResolveError> for ApiError {
    fn from(e: ResolveError) -> Self {
        match &e {
            ResolveError::NotFound(name) => Self::not_found("entity", name),
            ResolveError::Ambiguous { candidates, .. } => {
                Self::invalid(e.to_string()).with_detail(json!({ "candidates": candidates }))
            }
        }
    }
}

impl From<LayoutError> for ApiError {
    fn from(e: LayoutError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<MetricError> for ApiError {
    fn from(e: MetricError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Replay { source, .. } => source.into(),
            SessionError::UnknownChain(id) => Self::not_found("chain", &id),
            other => Self::internal(other.to_string()),
        }
    }
}
