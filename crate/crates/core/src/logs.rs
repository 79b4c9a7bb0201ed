//! Human-readable log lines published to UI log panels.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::Stamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stamp: Stamp,
    pub severity: Severity,
    pub source: String,
    pub text: String,
}

impl LogEntry {
    pub fn new(stamp: Stamp, severity: Severity, source: &str, text: impl Into<String>) -> Self {
        Self {
            stamp,
            severity,
            source: source.to_string(),
            text: text.into(),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("log entry serializes")
    }
}

pub const LOG_TYPE: &str = "LogEntry";
pub const LOG_FIELDS: [&str; 3] = ["stamp", "severity", "text"];
