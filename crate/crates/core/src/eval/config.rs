use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::DEFAULT_CONFIRMATION_DEPTH;
use crate::runtime::{CrashPoint, LinkFaults};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("delegation amounts must be positive (entry {0} is 0)")]
    ZeroAmount(usize),
    #[error("deposit must be positive")]
    ZeroDeposit,
    #[error("confirmation depth must be positive")]
    ZeroDepth,
    #[error("bad schedule entry {0:?}")]
    BadSchedule(String),
    #[error("bad fault plan: {0}")]
    BadFaults(String),
    #[error("config file {path}: {reason}")]
    File { path: PathBuf, reason: String },
}

/// Link faults plus an optional owner crash during the n-th delegation
/// (1-based).
///
/// Text form: comma-separated `drop=P`, `dup=P`, `reorder=P`, `corrupt=P`,
/// `crash=<point>@<n>`; `none` or empty for a clean run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaultPlan {
    pub link: LinkFaults,
    pub crash: Option<(CrashPoint, usize)>,
}

impl FaultPlan {
    pub fn is_clean(&self) -> bool {
        self.link.is_clean() && self.crash.is_none()
    }
}

fn probability(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(p) if (0.0..1.0).contains(&p) => Ok(p),
        _ => Err(ConfigError::BadFaults(format!("{key} must be a probability below 1, got {v:?}"))),
    }
}

impl FromStr for FaultPlan {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut plan = FaultPlan::default();
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(plan);
        }
        for item in s.split(',') {
            let (key, value) = item
                .trim()
                .split_once('=')
                .ok_or_else(|| ConfigError::BadFaults(format!("expected key=value, got {item:?}")))?;
            match key {
                "drop" => plan.link.drop = probability(key, value)?,
                "dup" | "duplicate" => plan.link.duplicate = probability(key, value)?,
                "reorder" => plan.link.reorder = probability(key, value)?,
                "corrupt" => plan.link.corrupt = probability(key, value)?,
                "crash" => {
                    let (point, n) = value
                        .split_once('@')
                        .ok_or_else(|| ConfigError::BadFaults(format!("crash needs <point>@<n>, got {value:?}")))?;
                    let point = point.parse::<CrashPoint>().map_err(ConfigError::BadFaults)?;
                    let n = n
                        .parse::<usize>()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| ConfigError::BadFaults(format!("bad delegation index {n:?}")))?;
                    plan.crash = Some((point, n));
                }
                other => return Err(ConfigError::BadFaults(format!("unknown fault {other:?}"))),
            }
        }
        Ok(plan)
    }
}

impl fmt::Display for FaultPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.link;
        let mut parts = Vec::new();
        for (k, v) in [("drop", l.drop), ("dup", l.duplicate), ("reorder", l.reorder), ("corrupt", l.corrupt)] {
            if v > 0.0 {
                parts.push(format!("{k}={v}"));
            }
        }
        if let Some((p, n)) = self.crash {
            parts.push(format!("crash={p}@{n}"));
        }
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

impl Serialize for FaultPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FaultPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn parse_schedule(s: &str) -> Result<Vec<u64>, ConfigError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().map_err(|_| ConfigError::BadSchedule(t.to_string())))
        .collect()
}

/// Everything that determines a run. The seed fixes every random choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// µBTC.
    pub deposit_amount: u64,
    pub delegation_schedule: Vec<u64>,
    pub confirmation_depth: u64,
    pub fault_plan: FaultPlan,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deposit_amount: 500,
            delegation_schedule: vec![200],
            confirmation_depth: DEFAULT_CONFIRMATION_DEPTH,
            fault_plan: FaultPlan::default(),
            output_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.deposit_amount == 0 {
            return Err(ConfigError::ZeroDeposit);
        }
        if self.confirmation_depth == 0 {
            return Err(ConfigError::ZeroDepth);
        }
        if let Some(i) = self.delegation_schedule.iter().position(|&a| a == 0) {
            return Err(ConfigError::ZeroAmount(i));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file_err = |reason: String| ConfigError::File {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        Self::from_toml(&text).map_err(file_err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}
