//! Blocking HTTP client for the scheduler protocol.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::http::Response;
use ureq::{Agent, Body};

use super::api::*;
use crate::cooccur::CooccurrenceResult;

#[derive(Clone)]
pub struct HttpClient {
    base: String,
    agent: Agent,
}

impl HttpClient {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(10))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpClient {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn decode<T: DeserializeOwned>(mut resp: Response<Body>) -> Result<T, ClientError> {
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        if status == 200 {
            return serde_json::from_str(&body).map_err(|e| ClientError::Protocol(format!("{e}: {body}")));
        }
        match serde_json::from_str::<ErrorBody>(&body) {
            Ok(err) => Err(ClientError::Api(SchedulerError::from_wire(&err.error, &err.message))),
            Err(_) => Err(ClientError::Protocol(format!("HTTP {status}: {body}"))),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self
            .agent
            .post(&self.url(path))
            .send_json(body)
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        Self::decode(resp)
    }
}

impl SchedulerApi for HttpClient {
    fn register_resource(&self, req: &RegisterResource) -> Result<ResourceEntry, ClientError> {
        self.post("/v1/resources", req)
    }

    fn list_resources(&self) -> Result<Vec<ResourceEntry>, ClientError> {
        let resp = self
            .agent
            .get(&self.url("/v1/resources"))
            .call()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        Self::decode(resp)
    }

    fn claim(&self, req: &ClaimRequest) -> Result<ClaimResponse, ClientError> {
        self.post("/v1/tasks/claim", req)
    }

    fn task_status(&self, query: &StatusQuery) -> Result<TaskStatus, ClientError> {
        let resp = self
            .agent
            .get(&self.url("/v1/tasks/status"))
            .query("resource_id", query.resource_id.to_hex())
            .query("pair_key", &query.pair_key)
            .query("case_mode", query.case_mode.as_str())
            .call()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        Self::decode(resp)
    }

    fn heartbeat(&self, task_id: TaskId, client_id: &str) -> Result<(), ClientError> {
        let _: serde_json::Value = self.post(
            &format!("/v1/tasks/{task_id}/heartbeat"),
            &ClientBody {
                client_id: client_id.to_string(),
            },
        )?;
        Ok(())
    }

    fn takeover(&self, task_id: TaskId, client_id: &str) -> Result<TakeoverOutcome, ClientError> {
        let out: Outcome<TakeoverOutcome> = self.post(
            &format!("/v1/tasks/{task_id}/takeover"),
            &ClientBody {
                client_id: client_id.to_string(),
            },
        )?;
        Ok(out.outcome)
    }

    fn submit_result(
        &self,
        task_id: TaskId,
        client_id: &str,
        result: &CooccurrenceResult,
    ) -> Result<SubmitAck, ClientError> {
        let out: Outcome<SubmitAck> = self.post(
            &format!("/v1/tasks/{task_id}/result"),
            &SubmitRequest {
                client_id: client_id.to_string(),
                result: result.clone(),
            },
        )?;
        Ok(out.outcome)
    }
}
