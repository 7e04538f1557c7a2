//! JSON-over-HTTP and WebSocket front end.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::error::ServiceError;
use crate::manager::*;
use crate::model::SCHEMA_VERSION;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub v: u32,
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Forbidden(_) => StatusCode::FORBIDDEN,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::CorruptLog { .. } | ServiceError::Storage(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            v: SCHEMA_VERSION,
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

type Shared = Arc<SessionManager>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}/participants", post(join))
        .route("/sessions/{id}/turns", post(turn))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/close", post(close))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(manager)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "v": SCHEMA_VERSION, "status": "ok" }))
}

async fn create(
    State(m): State<Shared>,
    body: Bytes,
) -> Result<(StatusCode, Json<CreateResponse>), ServiceError> {
    // An empty body means all defaults.
    let req = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::Validation(e.to_string()))?
    };
    Ok((StatusCode::CREATED, Json(m.create_session(req)?)))
}

async fn join(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<JoinRequest>,
) -> Result<(StatusCode, Json<JoinResponse>), ServiceError> {
    Ok((StatusCode::CREATED, Json(m.join(&id, req)?)))
}

async fn turn(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<TurnRequest>,
) -> Result<(StatusCode, Json<TurnResponse>), ServiceError> {
    let resp = tokio::task::spawn_blocking(move || m.post_turn(&id, req))
        .await
        .map_err(|e| ServiceError::Storage(std::io::Error::other(e)))??;
    let status = if resp.duplicate {
        StatusCode::OK
    } else {
        StatusCode::CREATED
    };
    Ok((status, Json(resp)))
}

async fn feedback(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<FeedbackRequest>,
) -> ApiResult<FeedbackResponse> {
    Ok(Json(m.record_feedback(&id, req)?))
}

async fn close(State(m): State<Shared>, Path(id): Path<String>) -> ApiResult<Ack> {
    Ok(Json(m.close(&id)?))
}

async fn summary(
    State(m): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<crate::summary::SessionSummary> {
    Ok(Json(m.summary(&id)?))
}

#[derive(Debug, Deserialize)]
pub struct StreamQuery {
    pub token: Option<String>,
    /// Last sequence number the client has seen; earlier events are skipped.
    pub since: Option<u64>,
}

async fn stream(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ServiceError> {
    let viewer = match q.token {
        Some(t) => Some(m.participant_for_token(&id, &t)?),
        None => None,
    };
    let sub = m.subscribe(&id)?;
    let since = q.since.unwrap_or(0);
    Ok(ws.on_upgrade(move |socket| pump(socket, sub, viewer, since)))
}

async fn pump(mut socket: WebSocket, sub: Subscription, viewer: Option<String>, since: u64) {
    let Subscription {
        backlog,
        mut live,
        share_suggestions,
    } = sub;
    let mut last = since;
    for e in backlog.iter().filter(|e| e.seq > since) {
        last = e.seq;
        let line = serde_json::to_string(&view_for(e, viewer.as_deref(), share_suggestions))
            .expect("events serialize");
        if socket.send(Message::Text(line.into())).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            msg = live.recv() => match msg {
                Ok(e) => {
                    // Events already sent from the backlog may also be queued.
                    if e.seq <= last {
                        continue;
                    }
                    last = e.seq;
                    let line = serde_json::to_string(&view_for(&e, viewer.as_deref(), share_suggestions))
                        .expect("events serialize");
                    if socket.send(Message::Text(line.into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) | Err(RecvError::Closed) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, manager: SessionManager) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(manager))).await
}
