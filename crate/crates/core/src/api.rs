//! Request and error bodies shared by the HTTP service and its client.
//! Responses are the report types from `eval` and `harness`.

use serde::{Deserialize, Serialize};

use crate::eval::{BENCH_ITERATIONS, DISK_GROWTH_SIZES};

pub const API_PREFIX: &str = "/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchRequest {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BenchRequest {
    fn default() -> Self {
        Self {
            iterations: BENCH_ITERATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiskGrowthRequest {
    pub seed: u64,
    pub sizes: Vec<u64>,
}

impl Default for DiskGrowthRequest {
    fn default() -> Self {
        Self {
            seed: 0,
            sizes: DISK_GROWTH_SIZES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackRequest {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The request itself was invalid: bad config, unknown scenario.
    Usage,
    /// The protocol run failed.
    Protocol,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}
