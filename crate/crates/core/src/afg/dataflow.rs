//! Source/sink queries over the data edges of one AFG.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::*;
use crate::app_model::AppIR;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SinkCategory {
    QueryParam,
    RenderedInView,
    BranchCondition,
    GlobalVariable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceCategory {
    UserInput,
    ReadQuery,
    ConstantValue,
    UtilityCall,
    GlobalVariable,
}

/// Where the result of query `q` ends up. Values passing into another
/// query's parameters stop there; extending a stored relation continues
/// through the extended query.
pub fn query_sinks(afg: &Afg, q: NodeId) -> BTreeSet<(SinkCategory, NodeId)> {
    let mut out = BTreeSet::new();
    let mut stack = vec![q];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        for e in afg.data_out(n) {
            let key = e.var.as_deref().unwrap_or_default();
            let u = afg.node(e.to);
            let accesses: Vec<&Access> = u.uses.iter().filter(|us| us.matches_def(key)).map(|us| &us.access).collect();
            match u.kind {
                NodeKind::Query => {
                    if accesses.iter().any(|a| **a == Access::Chain) {
                        stack.push(u.id);
                    }
                    if accesses.iter().any(|a| **a != Access::Chain) {
                        out.insert((SinkCategory::QueryParam, u.id));
                    }
                }
                NodeKind::Render | NodeKind::Link | NodeKind::Form => {
                    out.insert((SinkCategory::RenderedInView, u.id));
                }
                NodeKind::Branch => {
                    out.insert((SinkCategory::BranchCondition, u.id));
                }
                NodeKind::GlobalAssign => {
                    out.insert((SinkCategory::GlobalVariable, u.id));
                }
                _ => stack.push(u.id),
            }
        }
    }
    out
}

/// Origins of the value computed at `node` (typically a field write).
pub fn value_sources(afg: &Afg, node: NodeId) -> BTreeSet<SourceCategory> {
    trace_sources(afg, node).into_iter().map(|h| h.category).collect()
}

/// One terminal reached by [`trace_sources`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceHit {
    pub category: SourceCategory,
    /// Query or parameter node for `ReadQuery`/`UserInput`; otherwise the
    /// node holding the constant, utility call or global read.
    pub node: NodeId,
    /// How a read query's result was accessed.
    pub access: Option<Access>,
    /// The literal for `ConstantValue`.
    pub value: Option<Value>,
}

/// Backward closure over data edges from `node`, stopping at queries and
/// parameter reads.
pub fn trace_sources(afg: &Afg, node: NodeId) -> BTreeSet<SourceHit> {
    let mut out = BTreeSet::new();
    let mut stack = vec![node];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        let nd = afg.node(n);
        for l in &nd.leaves {
            let (category, value) = match l {
                Leaf::Const { value } => (SourceCategory::ConstantValue, Some(value.clone())),
                Leaf::Utility { .. } => (SourceCategory::UtilityCall, None),
            };
            out.insert(SourceHit { category, node: n, access: None, value });
        }
        let incoming: Vec<&AfgEdge> = afg.data_in(n).collect();
        for u in &nd.uses {
            let defs: Vec<&&AfgEdge> =
                incoming.iter().filter(|e| u.matches_def(e.var.as_deref().unwrap_or_default())).collect();
            if defs.is_empty() && u.var.starts_with('@') {
                out.insert(SourceHit { category: SourceCategory::GlobalVariable, node: n, access: None, value: None });
            }
            for e in defs {
                let d = afg.node(e.from);
                match d.kind {
                    NodeKind::Query => {
                        out.insert(SourceHit {
                            category: SourceCategory::ReadQuery,
                            node: d.id,
                            access: Some(u.access.clone()),
                            value: None,
                        });
                    }
                    NodeKind::ParamRead => {
                        out.insert(SourceHit {
                            category: SourceCategory::UserInput,
                            node: d.id,
                            access: None,
                            value: None,
                        });
                    }
                    _ => stack.push(d.id),
                }
            }
        }
    }
    out
}

/// Every node `node` depends on through data edges, continuing through
/// queries (their parameters) as well.
pub fn backward_closure(afg: &Afg, node: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        for e in afg.data_in(n) {
            if seen.insert(e.from) {
                stack.push(e.from);
            }
        }
    }
    seen
}

/// Columns of `q`'s result read anywhere downstream, on any path. Columns
/// of eager-loaded associations carry the association in their relation.
/// Primary keys are not reported.
pub fn used_columns(afg: &Afg, ir: &AppIR, q: NodeId) -> BTreeSet<ColumnRef> {
    used_data(afg, ir, q).columns
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsedData {
    pub columns: BTreeSet<ColumnRef>,
    /// Eager-loaded associations traversed downstream.
    pub associations: BTreeSet<String>,
}

pub fn used_data(afg: &Afg, ir: &AppIR, q: NodeId) -> UsedData {
    let mut used = UsedData::default();
    let Some(desc) = afg.node(q).descriptor() else { return used };
    let in_projection =
        |rel: &Relation, col: &str| desc.projection.iter().any(|c| &c.relation == rel && c.column == col);
    let mut mark = |used: &mut UsedData, rel: &Relation, col: &str| {
        if col != "id" && in_projection(rel, col) {
            let model = desc.relation_model(ir, rel).map(|m| m.name.clone()).unwrap_or_default();
            used.columns.insert(ColumnRef { relation: rel.clone(), model, column: col.to_string() });
        }
    };
    let mark_all = |used: &mut UsedData, rel: &Relation, mark: &mut dyn FnMut(&mut UsedData, &Relation, &str)| {
        for c in desc.projection.iter().filter(|c| &c.relation == rel) {
            mark(used, rel, &c.column);
        }
    };

    let mut stack = vec![(q, Relation::Root)];
    let mut seen = BTreeSet::new();
    while let Some((n, rel)) = stack.pop() {
        if !seen.insert((n, rel.clone())) {
            continue;
        }
        for e in afg.data_out(n) {
            let key = e.var.as_deref().unwrap_or_default();
            let u = afg.node(e.to);
            for us in u.uses.iter().filter(|us| us.matches_def(key)) {
                let copy_target = match &u.def {
                    Some(Def { binding: Binding::Copy { from, access }, .. }) if *from == us.var => Some(access),
                    _ => None,
                };
                let outflow =
                    matches!(u.kind, NodeKind::Render) || u.is_field_write() || u.kind == NodeKind::GlobalAssign;
                match (&us.access, &rel) {
                    (Access::Whole, _) => {
                        if copy_target == Some(&Access::Whole) {
                            stack.push((u.id, rel.clone()));
                        } else if outflow {
                            mark_all(&mut used, &rel, &mut mark);
                        }
                    }
                    (Access::Column { column }, _) => mark(&mut used, &rel, column),
                    (Access::Assoc { assoc }, Relation::Root) => {
                        if desc.eager_loads.contains(assoc) {
                            used.associations.insert(assoc.clone());
                            let arel = Relation::Assoc(assoc.clone());
                            if copy_target == Some(&Access::Assoc { assoc: assoc.clone() }) {
                                stack.push((u.id, arel));
                            } else if outflow {
                                mark_all(&mut used, &arel, &mut mark);
                            }
                        }
                    }
                    (Access::AssocColumn { assoc, column }, Relation::Root) if desc.eager_loads.contains(assoc) => {
                        used.associations.insert(assoc.clone());
                        mark(&mut used, &Relation::Assoc(assoc.clone()), column);
                    }
                    _ => {}
                }
            }
        }
    }
    used
}
