//! Wire types of the scheduler protocol and the client-side trait that both
//! the in-process scheduler and the HTTP client implement.

use serde::{Deserialize, Serialize};

use crate::cooccur::CooccurrenceResult;
use crate::corpus::{Granularity, ResourceId};
use crate::index::CaseMode;

pub type TaskId = i64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("unknown resource {0}")]
    UnknownResource(String),
    #[error("unknown task")]
    UnknownTask,
    #[error("caller does not own the task")]
    NotOwner,
    #[error("task already complete")]
    AlreadyComplete,
    #[error("fair-share quota exceeded")]
    QuotaExceeded,
    #[error("malformed resource id {0:?}")]
    MalformedResourceId(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("store: {0}")]
    Store(String),
}

impl SchedulerError {
    pub fn code(&self) -> &'static str {
        match self {
            SchedulerError::UnknownResource(_) => "unknown_resource",
            SchedulerError::UnknownTask => "unknown_task",
            SchedulerError::NotOwner => "not_owner",
            SchedulerError::AlreadyComplete => "already_complete",
            SchedulerError::QuotaExceeded => "quota_exceeded",
            SchedulerError::MalformedResourceId(_) => "malformed_resource_id",
            SchedulerError::BadRequest(_) => "bad_request",
            SchedulerError::Store(_) => "store",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            SchedulerError::UnknownResource(_) | SchedulerError::UnknownTask => 404,
            SchedulerError::NotOwner => 403,
            SchedulerError::AlreadyComplete => 409,
            SchedulerError::QuotaExceeded => 429,
            SchedulerError::MalformedResourceId(_) | SchedulerError::BadRequest(_) => 400,
            SchedulerError::Store(_) => 500,
        }
    }

    pub fn from_wire(code: &str, message: &str) -> Self {
        match code {
            "unknown_resource" => SchedulerError::UnknownResource(message.to_string()),
            "unknown_task" => SchedulerError::UnknownTask,
            "not_owner" => SchedulerError::NotOwner,
            "already_complete" => SchedulerError::AlreadyComplete,
            "quota_exceeded" => SchedulerError::QuotaExceeded,
            "malformed_resource_id" => SchedulerError::MalformedResourceId(message.to_string()),
            "bad_request" => SchedulerError::BadRequest(message.to_string()),
            _ => SchedulerError::Store(message.to_string()),
        }
    }
}

impl From<rusqlite::Error> for SchedulerError {
    fn from(e: rusqlite::Error) -> Self {
        SchedulerError::Store(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl From<&SchedulerError> for ErrorBody {
    fn from(e: &SchedulerError) -> Self {
        ErrorBody {
            error: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("scheduler unreachable: {0}")]
    Unreachable(String),
    #[error(transparent)]
    Api(#[from] SchedulerError),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterResource {
    pub resource_id: String,
    pub name: String,
    pub n_docs: usize,
    pub granularity: Granularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uploader: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceEntry {
    pub resource_id: ResourceId,
    pub name: String,
    pub n_docs: usize,
    pub granularity: Granularity,
    pub uploader: String,
    /// Milliseconds since the Unix epoch.
    pub registered_at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub client_id: String,
    pub resource_id: ResourceId,
    pub pair_key: String,
    pub case_mode: CaseMode,
    #[serde(default = "default_true")]
    pub data_transfer: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClaimResponse {
    Cached {
        result: CooccurrenceResult,
    },
    Claimed {
        task_id: TaskId,
        /// Set when the claim replaced another client's stale claim.
        #[serde(default)]
        reclaimed: bool,
    },
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    /// 1 is complete, 0 is incomplete.
    pub status: u8,
    pub stale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<TaskId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CooccurrenceResult>,
}

impl TaskStatus {
    pub fn is_complete(&self) -> bool {
        self.status == 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientBody {
    pub client_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub client_id: String,
    pub result: CooccurrenceResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitAck {
    Recorded,
    AlreadyComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TakeoverOutcome {
    Grant,
    Refused,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome<T> {
    pub outcome: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusQuery {
    pub resource_id: ResourceId,
    pub pair_key: String,
    pub case_mode: CaseMode,
}

/// Operations a controller needs from the global scheduler.
pub trait SchedulerApi: Send + Sync {
    fn register_resource(&self, req: &RegisterResource) -> Result<ResourceEntry, ClientError>;
    fn list_resources(&self) -> Result<Vec<ResourceEntry>, ClientError>;
    fn claim(&self, req: &ClaimRequest) -> Result<ClaimResponse, ClientError>;
    fn task_status(&self, query: &StatusQuery) -> Result<TaskStatus, ClientError>;
    fn heartbeat(&self, task_id: TaskId, client_id: &str) -> Result<(), ClientError>;
    fn takeover(&self, task_id: TaskId, client_id: &str) -> Result<TakeoverOutcome, ClientError>;
    fn submit_result(
        &self,
        task_id: TaskId,
        client_id: &str,
        result: &CooccurrenceResult,
    ) -> Result<SubmitAck, ClientError>;
}
