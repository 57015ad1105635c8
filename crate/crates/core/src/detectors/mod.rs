//! The nine anti-pattern analyses. Each detector reads AFGs (and the
//! action graph) and emits [`Finding`]s; nothing here mutates its input.

mod global;
mod local;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::afg::{ActionGraph, Afg, ColumnRef, NodeId};
use crate::app_model::{ActionId, AppIR, Location};
use crate::value::Value;

pub use global::{classify_column_sources, detect_prefetchable, uses_form_input};
pub use local::{
    classify_boundedness, detect_boundedness, detect_db_sensitive_branches, detect_loop_queries,
    detect_query_only_sinks, detect_shared_subexpressions, detect_unused_columns, detect_unused_eager_loads,
    loop_carried_edges,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    LoopQueries,
    UnusedColumns,
    UnusedEagerLoads,
    QueryOnlySinks,
    SharedSubexpressions,
    Boundedness,
    ColumnSources,
    DbSensitiveBranches,
    Prefetchable,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 9] = [
        DetectorKind::LoopQueries,
        DetectorKind::UnusedColumns,
        DetectorKind::UnusedEagerLoads,
        DetectorKind::QueryOnlySinks,
        DetectorKind::SharedSubexpressions,
        DetectorKind::Boundedness,
        DetectorKind::ColumnSources,
        DetectorKind::DbSensitiveBranches,
        DetectorKind::Prefetchable,
    ];

    pub fn id(self) -> &'static str {
        match self {
            DetectorKind::LoopQueries => "loop_queries",
            DetectorKind::UnusedColumns => "unused_columns",
            DetectorKind::UnusedEagerLoads => "unused_eager_loads",
            DetectorKind::QueryOnlySinks => "query_only_sinks",
            DetectorKind::SharedSubexpressions => "shared_subexpressions",
            DetectorKind::Boundedness => "boundedness",
            DetectorKind::ColumnSources => "column_sources",
            DetectorKind::DbSensitiveBranches => "db_sensitive_branches",
            DetectorKind::Prefetchable => "prefetchable",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().replace('-', "_");
        DetectorKind::ALL.into_iter().find(|k| k.id() == norm).ok_or_else(|| format!("unknown detector `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoundednessLabel {
    BoundedSingleValue,
    BoundedSingleRecord,
    BoundedLimited,
    Unbounded,
}

impl BoundednessLabel {
    pub fn is_bounded(self) -> bool {
        self != BoundednessLabel::Unbounded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ColumnSourceLabel {
    OnlyConst,
    OnlyOtherQuery,
    HasInput,
    OtherWithoutInput,
    NeverWritten,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingDetail {
    QueryInLoop {
        query: NodeId,
        #[serde(rename = "queryInLoop")]
        in_loop: bool,
    },
    LoopCarried {
        #[serde(rename = "loopHead")]
        loop_head: NodeId,
        #[serde(rename = "loopCarried")]
        carried: bool,
        /// Variables whose definitions cross the back edge.
        #[serde(rename = "carriedVars")]
        carried_vars: Vec<String>,
    },
    UnusedColumns {
        query: NodeId,
        #[serde(rename = "unusedColumns")]
        unused_columns: Vec<ColumnRef>,
        #[serde(rename = "wastedBytes")]
        wasted_bytes: u64,
        /// Non-key columns retrieved.
        #[serde(rename = "projectedColumns")]
        projected_columns: usize,
    },
    UnusedEagerLoad {
        query: NodeId,
        #[serde(rename = "eagerLoad")]
        eager_load: String,
        used: bool,
    },
    QueryOnlySink {
        query: NodeId,
        #[serde(rename = "consumerQueries")]
        consumer_queries: Vec<NodeId>,
    },
    SharedSubexpression {
        #[serde(rename = "baseQuery")]
        base_query: NodeId,
        /// Every issued query of the group (the base too when it is issued).
        #[serde(rename = "extendedQueries")]
        extended_queries: Vec<NodeId>,
    },
    Boundedness {
        query: NodeId,
        label: BoundednessLabel,
    },
    ColumnSource {
        table: String,
        column: String,
        label: ColumnSourceLabel,
        /// Constant values written, for `onlyConst`.
        #[serde(skip_serializing_if = "Vec::is_empty", default)]
        domain: Vec<Value>,
        /// Columns the value is derived from, for `onlyOtherQuery`.
        #[serde(rename = "sourceColumns", skip_serializing_if = "Vec::is_empty", default)]
        source_columns: Vec<String>,
    },
    DbSensitiveBranch {
        branch: NodeId,
        #[serde(rename = "dbSensitive")]
        db_sensitive: bool,
    },
    Prefetchable {
        next: ActionId,
        query: NodeId,
        prefetchable: bool,
        #[serde(rename = "sameTemplate")]
        same_template: bool,
    },
}

impl FindingDetail {
    pub fn detector(&self) -> DetectorKind {
        match self {
            FindingDetail::QueryInLoop { .. } | FindingDetail::LoopCarried { .. } => DetectorKind::LoopQueries,
            FindingDetail::UnusedColumns { .. } => DetectorKind::UnusedColumns,
            FindingDetail::UnusedEagerLoad { .. } => DetectorKind::UnusedEagerLoads,
            FindingDetail::QueryOnlySink { .. } => DetectorKind::QueryOnlySinks,
            FindingDetail::SharedSubexpression { .. } => DetectorKind::SharedSubexpressions,
            FindingDetail::Boundedness { .. } => DetectorKind::Boundedness,
            FindingDetail::ColumnSource { .. } => DetectorKind::ColumnSources,
            FindingDetail::DbSensitiveBranch { .. } => DetectorKind::DbSensitiveBranches,
            FindingDetail::Prefetchable { .. } => DetectorKind::Prefetchable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    /// Absent for application-wide findings (column sources).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<ActionId>,
    pub location: Location,
    #[serde(flatten)]
    pub detail: FindingDetail,
}

impl Finding {
    pub fn new(action: &ActionId, location: Location, detail: FindingDetail) -> Self {
        Finding { action: Some(action.clone()), location, detail }
    }

    pub fn detector(&self) -> DetectorKind {
        self.detail.detector()
    }
}

/// Run the per-action detectors on one AFG.
pub fn run_local(afg: &Afg, ir: &AppIR, enabled: &[DetectorKind]) -> Vec<Finding> {
    let on = |k| enabled.contains(&k);
    let mut out = Vec::new();
    if on(DetectorKind::LoopQueries) {
        out.extend(detect_loop_queries(afg));
    }
    if on(DetectorKind::UnusedColumns) {
        out.extend(detect_unused_columns(afg, ir));
    }
    if on(DetectorKind::UnusedEagerLoads) {
        out.extend(detect_unused_eager_loads(afg, ir));
    }
    if on(DetectorKind::QueryOnlySinks) {
        out.extend(detect_query_only_sinks(afg));
    }
    if on(DetectorKind::SharedSubexpressions) {
        out.extend(detect_shared_subexpressions(afg));
    }
    if on(DetectorKind::Boundedness) {
        out.extend(detect_boundedness(afg));
    }
    if on(DetectorKind::DbSensitiveBranches) {
        out.extend(detect_db_sensitive_branches(afg));
    }
    out
}

/// Run every enabled detector over the whole application. Findings are
/// ordered by action, then source location, then detector.
pub fn run_detectors(ir: &AppIR, graph: &ActionGraph, enabled: &[DetectorKind]) -> Vec<Finding> {
    use rayon::prelude::*;
    let afgs: Vec<&Afg> = graph.afgs.values().collect();
    let mut out: Vec<Finding> = afgs.par_iter().flat_map_iter(|a| run_local(a, ir, enabled)).collect();
    if enabled.contains(&DetectorKind::Prefetchable) {
        out.extend(detect_prefetchable(graph));
    }
    if enabled.contains(&DetectorKind::ColumnSources) {
        out.extend(classify_column_sources(&afgs, ir));
    }
    sort_findings(&mut out);
    out
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| (&a.action, a.location, a.detector()).cmp(&(&b.action, b.location, b.detector())));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_ids_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.id().parse::<DetectorKind>().unwrap(), k);
        }
        assert_eq!("db-sensitive-branches".parse::<DetectorKind>().unwrap(), DetectorKind::DbSensitiveBranches);
        assert!("nope".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn finding_json_shape() {
        let f = Finding::new(
            &ActionId::new("C", "a"),
            Location::default(),
            FindingDetail::UnusedEagerLoad { query: NodeId(3), eager_load: "tags".into(), used: false },
        );
        let v: serde_json::Value = serde_json::to_value(&f).unwrap();
        assert_eq!(v["kind"], "unused_eager_load");
        assert_eq!(v["eagerLoad"], "tags");
        let back: Finding = serde_json::from_value(v).unwrap();
        assert_eq!(back, f);
    }
}
