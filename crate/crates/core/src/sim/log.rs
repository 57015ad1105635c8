//! Session query logs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::afg::{NodeId, QueryKind};
use crate::app_model::{ActionId, HttpMethod, Location};
use crate::value::Value;

/// A stored row touched by a query and the columns read or written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedRow {
    pub table: String,
    pub id: i64,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryLogEntry {
    /// Logical timestamp, increasing in execution order.
    pub seq: u64,
    pub step: usize,
    pub action: ActionId,
    /// Method of the link or form that led to this step; absent on the
    /// first step and after restarts.
    pub trigger: Option<HttpMethod>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub form_fields: Vec<String>,
    pub node: NodeId,
    pub location: Location,
    pub kind: QueryKind,
    pub sql: String,
    pub rows: Vec<LoggedRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<i64>,
    /// Tuples returned (1 for COUNT/ANY), or rows written.
    pub result_rows: usize,
    /// Hash of the full result; empty for writes.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub digest: String,
}

impl QueryLogEntry {
    pub fn is_read(&self) -> bool {
        self.kind == QueryKind::Select
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepRecord {
    pub step: usize,
    pub action: ActionId,
    pub trigger: Option<HttpMethod>,
    /// Link or form node of the previous action that was followed.
    pub via: Option<NodeId>,
    pub from: Option<ActionId>,
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub entries: Vec<QueryLogEntry>,
}

impl SessionLog {
    /// One JSON object per entry, newline terminated.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}
