//! Typed client for the delegacoin HTTP service.

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use delegacoin::api::{ApiError, AttackRequest, BenchRequest, DiskGrowthRequest, ErrorKind, Health, ScenarioInfo};
use delegacoin::eval::{BenchReport, DemoReport, DiskGrowthReport, RunConfig};
use delegacoin::harness::ScenarioReport;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{}", .body.message)]
    Api { status: StatusCode, body: ApiError },
}

impl ClientError {
    /// Whether the server refused the request as invalid rather than
    /// failing to carry it out.
    pub fn is_usage(&self) -> bool {
        matches!(self, ClientError::Api { body, .. } if body.kind == ErrorKind::Usage)
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ApiError {
            kind: ErrorKind::Internal,
            message: format!("{status}: {text}"),
        });
        Err(ClientError::Api { status, body })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/v1/health").await
    }

    pub async fn demo(&self, cfg: &RunConfig) -> Result<DemoReport, ClientError> {
        self.post("/v1/demo", cfg).await
    }

    pub async fn bench(&self, req: &BenchRequest) -> Result<BenchReport, ClientError> {
        self.post("/v1/bench", req).await
    }

    pub async fn diskgrowth(&self, req: &DiskGrowthRequest) -> Result<DiskGrowthReport, ClientError> {
        self.post("/v1/diskgrowth", req).await
    }

    pub async fn attacks(&self) -> Result<Vec<ScenarioInfo>, ClientError> {
        self.get("/v1/attacks").await
    }

    pub async fn attack(&self, name: &str, req: &AttackRequest) -> Result<ScenarioReport, ClientError> {
        self.post(&format!("/v1/attacks/{name}"), req).await
    }
}
