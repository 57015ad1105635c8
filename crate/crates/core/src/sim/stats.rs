//! Caching and prefetching statistics over a session log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::log::{QueryLogEntry, SessionLog};
use crate::afg::ActionGraph;
use crate::app_model::HttpMethod;
use crate::detectors::uses_form_input;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CacheStats {
    pub reads: usize,
    pub hits: usize,
    pub syntactic_equiv: usize,
    pub equiv_differing_results: usize,
    pub hit_fraction: f64,
    pub syntactic_equiv_fraction: f64,
    /// Share of reads whose syntactically equal peer returned a different
    /// result.
    pub equiv_differing_results_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrefetchStats {
    /// Reads issued by steps reached through a link or form.
    pub considered: usize,
    pub prefetchable: usize,
    pub same_template: usize,
    pub prefetchable_fraction: f64,
    pub same_template_fraction: f64,
}

/// Per-read decisions behind [`CacheStats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CacheDecision {
    pub seq: u64,
    pub hit: bool,
    pub syntactic_equiv: bool,
    pub differing: bool,
}

pub(crate) fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// `(seq, step, columns)` of one row retrieval.
type RowRead<'l> = (u64, usize, BTreeSet<&'l str>);

/// Row retrievals and writes indexed by `(table, id)`.
#[derive(Default)]
struct RowHistory<'l> {
    reads: BTreeMap<(&'l str, i64), Vec<RowRead<'l>>>,
    writes: BTreeMap<(&'l str, i64), Vec<u64>>,
}

impl<'l> RowHistory<'l> {
    fn record(&mut self, e: &'l QueryLogEntry) {
        for r in &e.rows {
            let key = (r.table.as_str(), r.id);
            if e.is_read() {
                let cols = r.columns.iter().map(String::as_str).collect();
                self.reads.entry(key).or_default().push((e.seq, e.step, cols));
            } else {
                self.writes.entry(key).or_default().push(e.seq);
            }
        }
    }

    /// Whether some earlier step read this row with at least these columns
    /// and no write touched it since.
    fn covered(&self, e: &QueryLogEntry, table: &str, id: i64, cols: &[String]) -> bool {
        let Some(reads) = self.reads.get(&(table, id)) else { return false };
        let last_write = self.writes.get(&(table, id)).and_then(|w| w.iter().rev().find(|s| **s < e.seq)).copied();
        reads.iter().any(|(seq, step, have)| {
            *step < e.step && last_write.is_none_or(|w| w < *seq) && cols.iter().all(|c| have.contains(c.as_str()))
        })
    }
}

/// Hit / syntactic-equivalence decision for every read in the log.
pub fn cache_decisions(log: &SessionLog) -> Vec<CacheDecision> {
    let mut history = RowHistory::default();
    // Latest digest per SQL text, by step.
    let mut by_sql: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    let mut out = Vec::new();
    for e in &log.entries {
        if e.is_read() {
            let peer = by_sql
                .get(e.sql.as_str())
                .and_then(|v| v.iter().rev().find(|(step, _)| *step < e.step))
                .map(|(_, d)| *d);
            let hit = e.count.is_none()
                && !e.rows.is_empty()
                && e.rows.iter().all(|r| history.covered(e, &r.table, r.id, &r.columns));
            out.push(CacheDecision {
                seq: e.seq,
                hit,
                syntactic_equiv: peer.is_some(),
                differing: peer.is_some_and(|d| d != e.digest),
            });
            by_sql.entry(e.sql.as_str()).or_default().push((e.step, e.digest.as_str()));
        }
        history.record(e);
    }
    out
}

pub fn cache_stats(log: &SessionLog) -> CacheStats {
    let d = cache_decisions(log);
    let reads = d.len();
    let hits = d.iter().filter(|x| x.hit).count();
    let syn = d.iter().filter(|x| x.syntactic_equiv).count();
    let diff = d.iter().filter(|x| x.differing).count();
    CacheStats {
        reads,
        hits,
        syntactic_equiv: syn,
        equiv_differing_results: diff,
        hit_fraction: ratio(hits, reads),
        syntactic_equiv_fraction: ratio(syn, reads),
        equiv_differing_results_fraction: ratio(diff, reads),
    }
}

/// Per-read `(seq, prefetchable, sameTemplate)` for reads of triggered steps.
pub fn prefetch_decisions(log: &SessionLog, graph: &ActionGraph) -> Vec<(u64, bool, bool)> {
    let mut locs_by_step: BTreeMap<usize, BTreeSet<_>> = BTreeMap::new();
    for e in &log.entries {
        locs_by_step.entry(e.step).or_default().insert(e.location);
    }
    let mut out = Vec::new();
    for e in log.entries.iter().filter(|e| e.is_read()) {
        let Some(method) = e.trigger else { continue };
        let prefetchable = match method {
            HttpMethod::Get => true,
            HttpMethod::Post => graph.afg(&e.action).is_some_and(|afg| !uses_form_input(afg, e.node, &e.form_fields)),
        };
        let same =
            prefetchable && e.step > 0 && locs_by_step.get(&(e.step - 1)).is_some_and(|l| l.contains(&e.location));
        out.push((e.seq, prefetchable, same));
    }
    out
}

pub fn prefetch_stats(log: &SessionLog, graph: &ActionGraph) -> PrefetchStats {
    let d = prefetch_decisions(log, graph);
    let considered = d.len();
    let prefetchable = d.iter().filter(|x| x.1).count();
    let same = d.iter().filter(|x| x.2).count();
    PrefetchStats {
        considered,
        prefetchable,
        same_template: same,
        prefetchable_fraction: ratio(prefetchable, considered),
        same_template_fraction: ratio(same, considered),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afg::{NodeId, QueryKind};
    use crate::app_model::{ActionId, Location};
    use crate::sim::log::LoggedRow;

    fn entry(seq: u64, step: usize, kind: QueryKind, sql: &str, rows: &[i64], digest: &str) -> QueryLogEntry {
        QueryLogEntry {
            seq,
            step,
            action: ActionId::new("A", "a"),
            trigger: (step > 0).then_some(HttpMethod::Get),
            form_fields: Vec::new(),
            node: NodeId(1),
            location: Location { line: 3, col: 1, stmt: 1 },
            kind,
            sql: sql.into(),
            rows: rows.iter().map(|id| LoggedRow { table: "t".into(), id: *id, columns: vec!["id".into()] }).collect(),
            count: None,
            result_rows: rows.len(),
            digest: digest.into(),
        }
    }

    fn log(entries: Vec<QueryLogEntry>) -> SessionLog {
        SessionLog { seed: 0, steps: Vec::new(), entries }
    }

    #[test]
    fn single_step_has_no_hits() {
        let l =
            log(vec![entry(1, 0, QueryKind::Select, "q", &[1], "a"), entry(2, 0, QueryKind::Select, "q", &[1], "a")]);
        let s = cache_stats(&l);
        assert_eq!((s.reads, s.hits, s.syntactic_equiv), (2, 0, 0));
    }

    #[test]
    fn repeat_is_hit_until_written() {
        let l = log(vec![
            entry(1, 0, QueryKind::Select, "q", &[1, 2], "a"),
            entry(2, 1, QueryKind::Select, "q", &[1], "b"),
            entry(3, 1, QueryKind::Update, "u", &[1], ""),
            entry(4, 2, QueryKind::Select, "q", &[1], "c"),
        ]);
        let d = cache_decisions(&l);
        assert!(!d[0].hit);
        assert!(d[1].hit && d[1].syntactic_equiv && d[1].differing);
        assert!(!d[2].hit && d[2].syntactic_equiv && d[2].differing);
    }

    #[test]
    fn empty_log_gives_zero_fractions() {
        let s = cache_stats(&SessionLog::default());
        assert_eq!(s.hit_fraction, 0.0);
    }
}
