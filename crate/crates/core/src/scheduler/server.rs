//! HTTP/JSON front end for [`Scheduler`].

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use super::api::*;
use super::store::Scheduler;

struct ApiError(SchedulerError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(SchedulerError::BadRequest(r.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError(SchedulerError::BadRequest(r.body_text()))
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(s: Arc<Scheduler>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Scheduler) -> Result<T, SchedulerError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&s))
        .await
        .map_err(|e| ApiError(SchedulerError::Store(e.to_string())))?
        .map(Json)
        .map_err(ApiError)
}

async fn register(
    State(s): State<Arc<Scheduler>>,
    body: Result<Json<RegisterResource>, JsonRejection>,
) -> ApiResult<ResourceEntry> {
    let Json(req) = body?;
    blocking(s, move |s| s.register_resource(&req)).await
}

async fn list(State(s): State<Arc<Scheduler>>) -> ApiResult<Vec<ResourceEntry>> {
    blocking(s, |s| s.list_resources()).await
}

async fn claim(
    State(s): State<Arc<Scheduler>>,
    body: Result<Json<ClaimRequest>, JsonRejection>,
) -> ApiResult<ClaimResponse> {
    let Json(req) = body?;
    blocking(s, move |s| s.claim_task(&req)).await
}

async fn status(
    State(s): State<Arc<Scheduler>>,
    query: Result<Query<StatusQuery>, QueryRejection>,
) -> ApiResult<TaskStatus> {
    let Query(q) = query?;
    blocking(s, move |s| s.task_status(&q)).await
}

async fn heartbeat(
    State(s): State<Arc<Scheduler>>,
    Path(task_id): Path<TaskId>,
    body: Result<Json<ClientBody>, JsonRejection>,
) -> ApiResult<serde_json::Value> {
    let Json(req) = body?;
    blocking(s, move |s| s.heartbeat(task_id, &req.client_id).map(|_| serde_json::json!({"ok": true}))).await
}

async fn takeover(
    State(s): State<Arc<Scheduler>>,
    Path(task_id): Path<TaskId>,
    body: Result<Json<ClientBody>, JsonRejection>,
) -> ApiResult<Outcome<TakeoverOutcome>> {
    let Json(req) = body?;
    blocking(s, move |s| s.takeover(task_id, &req.client_id).map(|outcome| Outcome { outcome })).await
}

async fn result(
    State(s): State<Arc<Scheduler>>,
    Path(task_id): Path<TaskId>,
    body: Result<Json<SubmitRequest>, JsonRejection>,
) -> ApiResult<Outcome<SubmitAck>> {
    let Json(req) = body?;
    blocking(s, move |s| {
        s.submit_result(task_id, &req.client_id, &req.result)
            .map(|outcome| Outcome { outcome })
    })
    .await
}

pub fn router(scheduler: Arc<Scheduler>) -> Router {
    Router::new()
        .route("/v1/resources", post(register).get(list))
        .route("/v1/tasks/claim", post(claim))
        .route("/v1/tasks/status", get(status))
        .route("/v1/tasks/{task_id}/heartbeat", post(heartbeat))
        .route("/v1/tasks/{task_id}/takeover", post(takeover))
        .route("/v1/tasks/{task_id}/result", post(result))
        .with_state(scheduler)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(listener: TcpListener, scheduler: Arc<Scheduler>, shutdown: F) -> io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(scheduler))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A scheduler served from a background thread; dropped handles shut down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Binds `addr` and serves on a dedicated runtime thread.
pub fn spawn(scheduler: Arc<Scheduler>, addr: SocketAddr) -> io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("scheduler-http".into())
        .spawn(move || {
            runtime.block_on(serve(listener, scheduler, async {
                let _ = rx.await;
            }))
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
