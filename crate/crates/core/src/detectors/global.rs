use std::collections::{BTreeMap, BTreeSet};

use super::{ColumnSourceLabel, Finding, FindingDetail};
use crate::afg::dataflow::{backward_closure, trace_sources};
use crate::afg::*;
use crate::app_model::{ActionId, AppIR, HttpMethod};
use crate::value::Value;

#[derive(Default)]
struct WriteSummary {
    categories: BTreeSet<SourceCategory>,
    constants: BTreeSet<Value>,
    source_columns: BTreeSet<String>,
}

fn table_of(ir: &AppIR, d: &QueryDescriptor, rel: &Relation) -> String {
    d.relation_model(ir, rel).map(|m| m.table.clone()).unwrap_or_default()
}

/// Columns of query `d` read through `access`, as `table.column`.
fn accessed_columns(ir: &AppIR, d: &QueryDescriptor, access: &Access) -> Vec<String> {
    let all_of = |rel: &Relation| -> Vec<String> {
        let t = table_of(ir, d, rel);
        d.projection.iter().filter(|c| &c.relation == rel && !c.is_key()).map(|c| format!("{t}.{}", c.column)).collect()
    };
    match access {
        Access::Column { column } => vec![format!("{}.{column}", table_of(ir, d, &Relation::Root))],
        Access::AssocColumn { assoc, column } => {
            vec![format!("{}.{column}", table_of(ir, d, &Relation::Assoc(assoc.clone())))]
        }
        Access::Assoc { assoc } => all_of(&Relation::Assoc(assoc.clone())),
        _ => all_of(&Relation::Root),
    }
}

/// Label every non-key column of every model by where the values written
/// to it come from, across all actions.
pub fn classify_column_sources(afgs: &[&Afg], ir: &AppIR) -> Vec<Finding> {
    let mut writes: BTreeMap<(String, String), WriteSummary> = BTreeMap::new();
    for afg in afgs {
        for n in afg.nodes.iter() {
            let Payload::FieldWrite { model, column, .. } = &n.payload else { continue };
            let entry = writes.entry((model.clone(), column.clone())).or_default();
            for hit in trace_sources(afg, n.id) {
                entry.categories.insert(hit.category);
                if let Some(v) = hit.value {
                    entry.constants.insert(v);
                }
                if let (SourceCategory::ReadQuery, Some(access)) = (hit.category, &hit.access) {
                    if let Some(d) = afg.node(hit.node).descriptor() {
                        entry.source_columns.extend(accessed_columns(ir, d, access));
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for m in &ir.models {
        for f in m.fields.iter().filter(|f| f.name != "id") {
            let (label, domain, sources) = match writes.get(&(m.name.clone(), f.name.clone())) {
                None => (ColumnSourceLabel::NeverWritten, Vec::new(), Vec::new()),
                Some(w) => {
                    let only = |c: SourceCategory| w.categories.len() == 1 && w.categories.contains(&c);
                    if w.categories.contains(&SourceCategory::UserInput) {
                        (ColumnSourceLabel::HasInput, Vec::new(), Vec::new())
                    } else if only(SourceCategory::ConstantValue) {
                        (ColumnSourceLabel::OnlyConst, w.constants.iter().cloned().collect(), Vec::new())
                    } else if only(SourceCategory::ReadQuery) {
                        (ColumnSourceLabel::OnlyOtherQuery, Vec::new(), w.source_columns.iter().cloned().collect())
                    } else {
                        (ColumnSourceLabel::OtherWithoutInput, Vec::new(), Vec::new())
                    }
                }
            };
            out.push(Finding {
                action: None,
                location: f.location,
                detail: FindingDetail::ColumnSource {
                    table: m.table.clone(),
                    column: f.name.clone(),
                    label,
                    domain,
                    source_columns: sources,
                },
            });
        }
    }
    out
}

/// Whether query `q` depends (transitively) on a parameter read of one of
/// `fields`.
pub fn uses_form_input(afg: &Afg, q: NodeId, fields: &[String]) -> bool {
    backward_closure(afg, q).iter().any(|n| match &afg.node(*n).payload {
        Payload::Param { name } => fields.contains(name),
        _ => false,
    })
}

/// For each next-action edge, which queries of the next action could be
/// issued before the user's request arrives.
pub fn detect_prefetchable(graph: &ActionGraph) -> Vec<Finding> {
    let mut merged: BTreeMap<(ActionId, ActionId, NodeId), (bool, bool)> = BTreeMap::new();
    for e in &graph.edges {
        let (Some(cur), Some(next)) = (graph.afg(&e.from), graph.afg(&e.to)) else { continue };
        let fields: Vec<String> = match &cur.node(e.via).payload {
            Payload::Target { fields, .. } => fields.clone(),
            _ => Vec::new(),
        };
        let cur_locs: BTreeSet<_> = cur.query_nodes().map(|n| n.location).collect();
        for q in next.issued_queries() {
            let prefetchable = e.method == HttpMethod::Get || !uses_form_input(next, q.id, &fields);
            let same = cur_locs.contains(&q.location);
            let slot = merged.entry((e.from.clone(), e.to.clone(), q.id)).or_insert((false, same));
            slot.0 |= prefetchable;
        }
    }
    merged
        .into_iter()
        .map(|((from, to, q), (prefetchable, same_template))| {
            let loc = graph.afg(&to).map(|a| a.node(q).location).unwrap_or_default();
            Finding::new(&from, loc, FindingDetail::Prefetchable { next: to, query: q, prefetchable, same_template })
        })
        .collect()
}
