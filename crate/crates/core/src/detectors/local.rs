use std::collections::{BTreeMap, BTreeSet};

use super::{BoundednessLabel, Finding, FindingDetail};
use crate::afg::dataflow::{trace_sources, used_data};
use crate::afg::*;
use crate::app_model::{column_byte_size, AppIR};

/// Data edges of `loop_idx` that exist only because of its back edge, with
/// both ends inside the body. Definitions at the loop head (the induction
/// variable) are not counted.
pub fn loop_carried_edges(afg: &Afg, loop_idx: usize) -> BTreeSet<(NodeId, NodeId, String)> {
    let l = &afg.loops[loop_idx];
    let all: Vec<(NodeId, NodeId)> = afg.control_edges().collect();
    let without: Vec<(NodeId, NodeId)> = all.iter().copied().filter(|&e| e != (l.end, l.head)).collect();
    let with_back = reaching_data_edges(&afg.nodes, &all);
    let no_back = reaching_data_edges(&afg.nodes, &without);
    with_back.difference(&no_back).filter(|(d, u, _)| l.body.contains(d) && l.body.contains(u)).cloned().collect()
}

pub fn detect_loop_queries(afg: &Afg) -> Vec<Finding> {
    let mut out = Vec::new();
    for q in afg.issued_queries() {
        out.push(Finding::new(
            &afg.action,
            q.location,
            FindingDetail::QueryInLoop { query: q.id, in_loop: afg.in_loop(q.id) },
        ));
    }
    for (i, l) in afg.loops.iter().enumerate() {
        let carried = loop_carried_edges(afg, i);
        let vars: BTreeSet<String> = carried.iter().map(|(_, _, v)| v.clone()).collect();
        out.push(Finding::new(
            &afg.action,
            afg.node(l.head).location,
            FindingDetail::LoopCarried {
                loop_head: l.head,
                carried: !carried.is_empty(),
                carried_vars: vars.into_iter().collect(),
            },
        ));
    }
    out
}

/// Queries that retrieve rows (not COUNT/ANY, not writes).
fn row_queries(afg: &Afg) -> impl Iterator<Item = (&AfgNode, &QueryDescriptor)> {
    afg.issued_queries().filter_map(|n| {
        let d = n.descriptor()?;
        let rows = d.is_read() && matches!(d.aggregate, None | Some(Aggregate::FindByPk));
        rows.then_some((n, d))
    })
}

pub fn detect_unused_columns(afg: &Afg, ir: &AppIR) -> Vec<Finding> {
    let mut out = Vec::new();
    for (q, d) in row_queries(afg) {
        let projected: Vec<&ColumnRef> = d.projection.iter().filter(|c| !c.is_key()).collect();
        if projected.is_empty() {
            continue;
        }
        let used = used_data(afg, ir, q.id).columns;
        let unused: Vec<ColumnRef> = projected.iter().filter(|c| !used.contains(c)).map(|c| (*c).clone()).collect();
        let wasted = unused
            .iter()
            .filter_map(|c| ir.model(&c.model).and_then(|m| m.field(&c.column)))
            .map(column_byte_size)
            .sum();
        out.push(Finding::new(
            &afg.action,
            q.location,
            FindingDetail::UnusedColumns {
                query: q.id,
                unused_columns: unused,
                wasted_bytes: wasted,
                projected_columns: projected.len(),
            },
        ));
    }
    out
}

/// An eager load is used when its data is read downstream, or when the
/// query itself filters, orders or groups on it.
pub fn detect_unused_eager_loads(afg: &Afg, ir: &AppIR) -> Vec<Finding> {
    let mut out = Vec::new();
    for (q, d) in row_queries(afg) {
        if d.eager_loads.is_empty() {
            continue;
        }
        let used = used_data(afg, ir, q.id);
        let referenced: BTreeSet<&str> = d
            .predicates
            .iter()
            .map(|p| &p.column)
            .chain(d.order_by.iter())
            .chain(d.group_by.iter())
            .filter_map(|c| match &c.relation {
                Relation::Assoc(a) => Some(a.as_str()),
                Relation::Root => None,
            })
            .collect();
        for a in &d.eager_loads {
            let is_used = used.associations.contains(a)
                || used.columns.iter().any(|c| c.relation == Relation::Assoc(a.clone()))
                || referenced.contains(a.as_str());
            out.push(Finding::new(
                &afg.action,
                q.location,
                FindingDetail::UnusedEagerLoad { query: q.id, eager_load: a.clone(), used: is_used },
            ));
        }
    }
    out
}

pub fn detect_query_only_sinks(afg: &Afg) -> Vec<Finding> {
    let mut out = Vec::new();
    for q in afg.issued_queries() {
        if !q.descriptor().is_some_and(|d| d.is_read()) {
            continue;
        }
        let sinks = query_sinks(afg, q.id);
        if !sinks.is_empty() && sinks.iter().all(|(c, _)| *c == SinkCategory::QueryParam) {
            let consumers: BTreeSet<NodeId> = sinks.iter().map(|(_, n)| *n).collect();
            out.push(Finding::new(
                &afg.action,
                q.location,
                FindingDetail::QueryOnlySink { query: q.id, consumer_queries: consumers.into_iter().collect() },
            ));
        }
    }
    out
}

fn chain_root(afg: &Afg, mut n: NodeId) -> NodeId {
    let mut hops = 0;
    while let Some(p) = afg.node(n).descriptor().and_then(|d| d.chain_prefix_of) {
        n = p;
        hops += 1;
        if hops > afg.nodes.len() {
            break;
        }
    }
    n
}

pub fn detect_shared_subexpressions(afg: &Afg) -> Vec<Finding> {
    let mut groups: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for q in afg.query_nodes() {
        if q.descriptor().is_some_and(|d| d.chain_prefix_of.is_some()) {
            groups.entry(chain_root(afg, q.id)).or_default().insert(q.id);
        }
    }
    let mut out = Vec::new();
    for (root, members) in groups {
        let mut all: BTreeSet<NodeId> = members.into_iter().filter(|m| afg.node(*m).is_issued_query()).collect();
        if afg.node(root).is_issued_query() {
            all.insert(root);
        }
        if all.len() >= 2 {
            out.push(Finding::new(
                &afg.action,
                afg.node(root).location,
                FindingDetail::SharedSubexpression { base_query: root, extended_queries: all.into_iter().collect() },
            ));
        }
    }
    out
}

/// Label a query by how its result size depends on the database size.
pub fn classify_boundedness(q: &QueryDescriptor) -> BoundednessLabel {
    if matches!(q.aggregate, Some(Aggregate::Count) | Some(Aggregate::Any)) {
        return BoundednessLabel::BoundedSingleValue;
    }
    if !q.is_read() {
        return BoundednessLabel::BoundedSingleRecord;
    }
    let key_eq =
        q.predicates.iter().any(|p| p.column.relation == Relation::Root && p.column.is_key() && p.op == PredOp::Eq);
    if q.aggregate == Some(Aggregate::FindByPk) || key_eq {
        return BoundednessLabel::BoundedSingleRecord;
    }
    if q.limit.is_some() {
        return BoundednessLabel::BoundedLimited;
    }
    BoundednessLabel::Unbounded
}

pub fn detect_boundedness(afg: &Afg) -> Vec<Finding> {
    afg.issued_queries()
        .filter_map(|q| {
            let label = classify_boundedness(q.descriptor()?);
            Some(Finding::new(&afg.action, q.location, FindingDetail::Boundedness { query: q.id, label }))
        })
        .collect()
}

pub fn detect_db_sensitive_branches(afg: &Afg) -> Vec<Finding> {
    afg.nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Branch)
        .map(|b| {
            let sensitive = trace_sources(afg, b.id).iter().any(|h| h.category == SourceCategory::ReadQuery);
            Finding::new(
                &afg.action,
                b.location,
                FindingDetail::DbSensitiveBranch { branch: b.id, db_sensitive: sensitive },
            )
        })
        .collect()
}
