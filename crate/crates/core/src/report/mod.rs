//! Per-application summaries and report documents (JSON, CSV, text).

mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afg::{ActionGraph, NodeKind};
use crate::app_model::ActionId;
use crate::detectors::{BoundednessLabel, ColumnSourceLabel, DetectorKind, Finding, FindingDetail};
use crate::rewrite::{Inapplicable, RewriteSuggestion};
use crate::sim::{SimConfig, SimMeans};

pub use text::{color_from_env, render_text};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("unsupported format `{0}` (expected json, csv or text)")]
    UnsupportedFormat(String),
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error("report version {0} is not supported")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" | "txt" => Ok(Format::Text),
            _ => Err(ReportError::UnsupportedFormat(s.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Text => "text",
        })
    }
}

/// Counts behind one per-action fraction. `flagged` counts findings with
/// a positive outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tally {
    pub findings: u64,
    pub flagged: u64,
    pub numerator: u64,
    pub denominator: u64,
}

impl Tally {
    pub fn fraction(&self) -> Option<f64> {
        (self.denominator > 0).then(|| self.numerator as f64 / self.denominator as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionSummary {
    pub action: ActionId,
    /// Issued queries, each counted once even inside a loop.
    pub queries: u64,
    pub reads: u64,
    pub loops: u64,
    pub carried_loops: u64,
    pub branches: u64,
    pub wasted_bytes: u64,
    pub tallies: BTreeMap<DetectorKind, Tally>,
    /// Sub-split of the boundedness tally by label (reads only).
    pub bounded_labels: BTreeMap<BoundednessLabel, u64>,
    pub same_template: u64,
}

/// An application-level value: the unweighted mean of per-action values
/// over the `terms` actions where it is defined, plus pooled counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metric {
    pub value: f64,
    pub terms: u64,
    pub numerator: u64,
    pub denominator: u64,
}

impl Metric {
    fn from_parts(parts: impl Iterator<Item = (u64, u64)>) -> Self {
        let mut m = Metric::default();
        let mut sum = 0.0;
        for (n, d) in parts {
            m.numerator += n;
            m.denominator += d;
            if d > 0 {
                sum += n as f64 / d as f64;
                m.terms += 1;
            }
        }
        if m.terms > 0 {
            m.value = sum / m.terms as f64;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Averages {
    pub query_in_loop: Metric,
    pub loop_carried: Metric,
    pub unused_columns: Metric,
    /// Mean wasted bytes per action with row queries; `numerator` is the
    /// total.
    pub unused_bytes: Metric,
    pub unused_eager_loads: Metric,
    pub query_only_sinks: Metric,
    pub shared_subexpressions: Metric,
    pub bounded: Metric,
    pub bounded_single_value: Metric,
    pub bounded_single_record: Metric,
    pub bounded_limited: Metric,
    pub unbounded: Metric,
    pub db_sensitive_branches: Metric,
    pub prefetchable: Metric,
    pub same_template: Metric,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnSourceBreakdown {
    pub counts: BTreeMap<ColumnSourceLabel, u64>,
    /// Over written columns; never-written ones are excluded.
    pub fractions: BTreeMap<ColumnSourceLabel, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationSummary {
    pub config: SimConfig,
    pub sessions: u64,
    pub means: SimMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AppSummary {
    pub application: String,
    pub detectors: Vec<DetectorKind>,
    pub actions: Vec<ActionSummary>,
    pub averages: Averages,
    pub column_sources: ColumnSourceBreakdown,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
}

/// Static counts of one action used as denominators.
fn action_counts(graph: &ActionGraph, a: &ActionId) -> ActionSummary {
    let mut s = ActionSummary {
        action: a.clone(),
        queries: 0,
        reads: 0,
        loops: 0,
        carried_loops: 0,
        branches: 0,
        wasted_bytes: 0,
        tallies: BTreeMap::new(),
        bounded_labels: BTreeMap::new(),
        same_template: 0,
    };
    if let Some(afg) = graph.afg(a) {
        for q in afg.issued_queries() {
            s.queries += 1;
            if q.descriptor().is_some_and(|d| d.is_read()) {
                s.reads += 1;
            }
        }
        s.loops = afg.loops.len() as u64;
        s.branches = afg.nodes.iter().filter(|n| n.kind == NodeKind::Branch).count() as u64;
    }
    s
}

/// Per-action tallies first, then unweighted means over actions.
pub fn aggregate(
    application: &str,
    graph: &ActionGraph,
    findings: &[Finding],
    detectors: &[DetectorKind],
    simulation: Option<SimulationSummary>,
) -> AppSummary {
    let mut actions: BTreeMap<ActionId, ActionSummary> =
        graph.afgs.keys().map(|a| (a.clone(), action_counts(graph, a))).collect();
    let mut column_sources = ColumnSourceBreakdown::default();
    for f in findings {
        let kind = f.detector();
        if let FindingDetail::ColumnSource { label, .. } = &f.detail {
            *column_sources.counts.entry(*label).or_default() += 1;
            continue;
        }
        let Some(a) = f.action.as_ref() else { continue };
        let Some(s) = actions.get_mut(a) else { continue };
        let is_read = |q| graph.afg(a).and_then(|g| g.node(q).descriptor()).is_some_and(|d| d.is_read());
        let (flag, num, den) = match &f.detail {
            FindingDetail::QueryInLoop { in_loop, .. } => (*in_loop, *in_loop as u64, 1),
            FindingDetail::LoopCarried { carried, .. } => {
                s.carried_loops += *carried as u64;
                continue;
            }
            FindingDetail::UnusedColumns { unused_columns, wasted_bytes, projected_columns, .. } => {
                s.wasted_bytes += wasted_bytes;
                (!unused_columns.is_empty(), unused_columns.len() as u64, *projected_columns as u64)
            }
            FindingDetail::UnusedEagerLoad { used, .. } => (!used, !used as u64, 1),
            // Denominator is the action's read count, set below.
            FindingDetail::QueryOnlySink { .. } => (true, 1, 0),
            FindingDetail::SharedSubexpression { extended_queries, .. } => (true, extended_queries.len() as u64, 0),
            FindingDetail::Boundedness { query, label } => {
                if !is_read(*query) {
                    continue;
                }
                *s.bounded_labels.entry(*label).or_default() += 1;
                (label.is_bounded(), label.is_bounded() as u64, 1)
            }
            FindingDetail::DbSensitiveBranch { db_sensitive, .. } => (*db_sensitive, *db_sensitive as u64, 1),
            FindingDetail::Prefetchable { prefetchable, same_template, .. } => {
                s.same_template += *same_template as u64;
                (*prefetchable, *prefetchable as u64, 1)
            }
            FindingDetail::ColumnSource { .. } => unreachable!("handled above"),
        };
        let t = s.tallies.entry(kind).or_default();
        t.findings += 1;
        t.flagged += flag as u64;
        t.numerator += num;
        t.denominator += den;
    }
    for s in actions.values_mut() {
        if let Some(t) = s.tallies.get_mut(&DetectorKind::QueryOnlySinks) {
            t.denominator = s.reads;
        }
        if let Some(t) = s.tallies.get_mut(&DetectorKind::SharedSubexpressions) {
            t.denominator = s.queries;
        }
    }
    let actions: Vec<ActionSummary> = actions.into_values().collect();

    let metric = |k: DetectorKind| {
        Metric::from_parts(actions.iter().map(|s| s.tallies.get(&k).map_or((0, 0), |t| (t.numerator, t.denominator))))
    };
    // Sinks and shared subexpressions only emit positive findings, so an
    // action without one still has a denominator when the detector ran.
    let with_default = |k: DetectorKind, den: fn(&ActionSummary) -> u64| {
        Metric::from_parts(actions.iter().map(|s| match s.tallies.get(&k) {
            Some(t) => (t.numerator, t.denominator),
            None if detectors.contains(&k) => (0, den(s)),
            None => (0, 0),
        }))
    };
    let label = |l: BoundednessLabel| {
        Metric::from_parts(actions.iter().map(|s| {
            let den = s.tallies.get(&DetectorKind::Boundedness).map_or(0, |t| t.denominator);
            (s.bounded_labels.get(&l).copied().unwrap_or(0), den)
        }))
    };
    let averages = Averages {
        query_in_loop: metric(DetectorKind::LoopQueries),
        loop_carried: Metric::from_parts(
            actions
                .iter()
                .filter(|_| detectors.contains(&DetectorKind::LoopQueries))
                .map(|s| (s.carried_loops, s.loops)),
        ),
        unused_columns: metric(DetectorKind::UnusedColumns),
        unused_bytes: Metric::from_parts(
            actions
                .iter()
                .filter(|s| s.tallies.get(&DetectorKind::UnusedColumns).is_some_and(|t| t.findings > 0))
                .map(|s| (s.wasted_bytes, 1)),
        ),
        unused_eager_loads: metric(DetectorKind::UnusedEagerLoads),
        query_only_sinks: with_default(DetectorKind::QueryOnlySinks, |s| s.reads),
        shared_subexpressions: with_default(DetectorKind::SharedSubexpressions, |s| s.queries),
        bounded: metric(DetectorKind::Boundedness),
        bounded_single_value: label(BoundednessLabel::BoundedSingleValue),
        bounded_single_record: label(BoundednessLabel::BoundedSingleRecord),
        bounded_limited: label(BoundednessLabel::BoundedLimited),
        unbounded: label(BoundednessLabel::Unbounded),
        db_sensitive_branches: metric(DetectorKind::DbSensitiveBranches),
        prefetchable: metric(DetectorKind::Prefetchable),
        same_template: Metric::from_parts(actions.iter().map(|s| {
            let den = s.tallies.get(&DetectorKind::Prefetchable).map_or(0, |t| t.denominator);
            (s.same_template, den)
        })),
    };
    let written: u64 =
        column_sources.counts.iter().filter(|(l, _)| **l != ColumnSourceLabel::NeverWritten).map(|(_, c)| *c).sum();
    if written > 0 {
        for (l, c) in &column_sources.counts {
            if *l != ColumnSourceLabel::NeverWritten {
                column_sources.fractions.insert(*l, *c as f64 / written as f64);
            }
        }
    }
    AppSummary {
        application: application.to_string(),
        detectors: detectors.to_vec(),
        actions,
        averages,
        column_sources,
        simulation,
    }
}

/// One analyzed application inside a report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApplicationReport {
    pub summary: AppSummary,
    pub findings: Vec<Finding>,
    pub suggestions: Vec<RewriteSuggestion>,
    #[serde(default)]
    pub inapplicable: Vec<Inapplicable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportDocument {
    pub report_version: u32,
    pub applications: Vec<ApplicationReport>,
}

impl ReportDocument {
    pub fn new(mut applications: Vec<ApplicationReport>) -> Self {
        applications.sort_by(|a, b| a.summary.application.cmp(&b.summary.application));
        ReportDocument { report_version: REPORT_VERSION, applications }
    }

    pub fn from_json(s: &str) -> Result<Self, ReportError> {
        let doc: ReportDocument = serde_json::from_str(s).map_err(|e| ReportError::Malformed(e.to_string()))?;
        if doc.report_version != REPORT_VERSION {
            return Err(ReportError::Version(doc.report_version));
        }
        Ok(doc)
    }

    /// Merge several documents. For an application present in more than
    /// one, later findings replace earlier ones and a simulation section is
    /// kept from whichever document has one (the last wins).
    pub fn merge(docs: impl IntoIterator<Item = ReportDocument>) -> Self {
        let mut by_name: BTreeMap<String, ApplicationReport> = BTreeMap::new();
        for d in docs {
            for app in d.applications {
                let name = app.summary.application.clone();
                match by_name.remove(&name) {
                    None => {
                        by_name.insert(name, app);
                    }
                    Some(prev) => {
                        let mut next = app;
                        if next.summary.simulation.is_none() {
                            next.summary.simulation = prev.summary.simulation;
                        }
                        by_name.insert(name, next);
                    }
                }
            }
        }
        ReportDocument::new(by_name.into_values().collect())
    }
}

/// Render a document. Text output takes its color setting from the caller.
pub fn emit_report(doc: &ReportDocument, format: Format, color: bool) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => emit_csv(doc),
        Format::Text => render_text(doc, color),
    }
}

pub const CSV_HEADER: [&str; 9] =
    ["application", "action", "detector", "findings", "flagged", "numerator", "denominator", "fraction", "queries"];

/// One row per (action, detector); application-wide column sources use
/// action `*` and one row per label.
fn emit_csv(doc: &ReportDocument) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for app in &doc.applications {
        let s = &app.summary;
        for a in &s.actions {
            for k in DetectorKind::ALL {
                if k == DetectorKind::ColumnSources {
                    continue;
                }
                let t = a.tallies.get(&k).copied().unwrap_or_default();
                let fraction = t.fraction().map(|f| format!("{f:.6}")).unwrap_or_default();
                w.write_record([
                    s.application.clone(),
                    a.action.to_string(),
                    k.id().to_string(),
                    t.findings.to_string(),
                    t.flagged.to_string(),
                    t.numerator.to_string(),
                    t.denominator.to_string(),
                    fraction,
                    a.queries.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        let written: u64 = s.column_sources.fractions.keys().map(|l| s.column_sources.counts[l]).sum();
        for (l, c) in &s.column_sources.counts {
            let label = serde_json::to_value(l).expect("label serializes");
            let fraction = s.column_sources.fractions.get(l).map(|f| format!("{f:.6}")).unwrap_or_default();
            let den = if *l == ColumnSourceLabel::NeverWritten { 0 } else { written };
            w.write_record([
                s.application.clone(),
                "*".to_string(),
                format!("column_sources:{}", label.as_str().unwrap_or_default()),
                c.to_string(),
                c.to_string(),
                c.to_string(),
                den.to_string(),
                fraction,
                String::new(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_is_unweighted_mean() {
        let m = Metric::from_parts([(0, 4), (3, 3), (0, 0)].into_iter());
        assert_eq!(m.value, 0.5);
        assert_eq!((m.terms, m.numerator, m.denominator), (2, 3, 7));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("JSON".parse::<Format>().unwrap(), Format::Json);
        assert!(matches!("xml".parse::<Format>(), Err(ReportError::UnsupportedFormat(_))));
    }

    #[test]
    fn empty_document_round_trips() {
        let doc = ReportDocument::new(Vec::new());
        let s = emit_report(&doc, Format::Json, false);
        assert!(s.contains("\"reportVersion\": 1"));
        assert_eq!(ReportDocument::from_json(&s).unwrap(), doc);
        assert_eq!(emit_report(&doc, Format::Csv, false).lines().count(), 1);
    }
}
