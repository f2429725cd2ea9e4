//! JSON-over-HTTP endpoints.
//!
//! | method | path                    | body / query        |
//! |--------|-------------------------|---------------------|
//! | POST   | `/api/queries`          | [`QueryRequest`]    |
//! | GET    | `/api/accounts`         |                     |
//! | GET    | `/api/accounts/{id}`    |                     |
//! | GET    | `/api/budget`           |                     |
//! | GET    | `/api/history`          | `?key=<hex>` (opt.) |
//! | GET    | `/api/ledger/verify`    |                     |
//! | GET    | `/api/meta`             |                     |
//!
//! Errors are `{"code": ..., "message": ...}` with a matching status.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{QueryRequest, QueryService, ServiceError};
use crate::query::QueryKey;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                code: "bad_request".into(),
                message,
            },
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status =
            StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        ApiError {
            status,
            body: ErrorBody {
                code: e.code().into(),
                message: e.to_string(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(service: Arc<QueryService>) -> Router {
    Router::new()
        .route("/api/queries", post(submit))
        .route("/api/accounts", get(accounts))
        .route("/api/accounts/{id}", get(account))
        .route("/api/budget", get(budget))
        .route("/api/history", get(history))
        .route("/api/ledger/verify", get(verify))
        .route("/api/meta", get(meta))
        .with_state(service)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(service: Arc<QueryService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service)).await
}

async fn submit(
    State(svc): State<Arc<QueryService>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<super::QueryResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let out = tokio::task::spawn_blocking(move || svc.submit_query(&req))
        .await
        .map_err(|e| ApiError::from(ServiceError::Internal(e.to_string())))??;
    Ok(Json(out))
}

async fn accounts(State(svc): State<Arc<QueryService>>) -> Json<Vec<crate::ledger::Account>> {
    Json(svc.accounts())
}

async fn account(
    State(svc): State<Arc<QueryService>>,
    Path(id): Path<String>,
) -> ApiResult<AccountView> {
    let a = svc.get_account(&id)?;
    Ok(Json(AccountView {
        address: a.id.to_string(),
        balance: a.balance,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountView {
    pub address: String,
    pub balance: f64,
}

async fn budget(State(svc): State<Arc<QueryService>>) -> Json<super::BudgetView> {
    Json(svc.budget())
}

#[derive(Debug, Deserialize)]
struct HistoryParams {
    key: Option<String>,
}

async fn history(
    State(svc): State<Arc<QueryService>>,
    params: Result<Query<HistoryParams>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Vec<crate::ledger::ReleaseRecord>> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let key = match params.key.as_deref() {
        None | Some("") => None,
        Some(k) => Some(
            k.parse::<QueryKey>()
                .map_err(|e| ApiError::bad_request(e.to_string()))?,
        ),
    };
    Ok(Json(svc.history(key.as_ref())))
}

async fn verify(State(svc): State<Arc<QueryService>>) -> ApiResult<crate::ledger::Verification> {
    let svc2 = svc.clone();
    let v = tokio::task::spawn_blocking(move || svc2.verify())
        .await
        .map_err(|e| ApiError::from(ServiceError::Internal(e.to_string())))??;
    Ok(Json(v))
}

async fn meta(State(svc): State<Arc<QueryService>>) -> Json<super::Meta> {
    Json(svc.meta())
}
