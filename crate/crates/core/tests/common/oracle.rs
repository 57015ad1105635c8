//! Brute-force oracles. Every path-sensitive oracle explores the finite set
//! of reachable `(node, abstract state)` pairs over the control edges, which
//! covers every control path including any number of loop iterations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ormlens_core::afg::dataflow::UsedData;
use ormlens_core::afg::{
    Access, Afg, AfgNode, Binding, ColumnRef, NodeId, NodeKind, Relation, SinkCategory, SourceCategory,
};
use ormlens_core::sim::{QueryLogEntry, SessionLog};
use ormlens_core::AppIR;

pub type DataEdge = (NodeId, NodeId, String);

/// `key` is a variable, `@global` or `var.column`.
fn use_reads(u: &ormlens_core::afg::Use, key: &str) -> bool {
    if u.var == key {
        return true;
    }
    let Some((var, col)) = key.split_once('.') else { return false };
    var == u.var
        && match &u.access {
            Access::Column { column } => column == col,
            Access::Whole | Access::Fields => true,
            _ => false,
        }
}

/// A definition of `new` overwrites `old`: same key, or a whole-variable
/// definition replacing one of its fields.
fn overwrites(new: &str, old: &str) -> bool {
    new == old || (!new.contains('.') && old.split_once('.').is_some_and(|(v, _)| v == new))
}

fn successors(afg: &Afg, skip: Option<(NodeId, NodeId)>) -> BTreeMap<NodeId, Vec<NodeId>> {
    let mut m: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (a, b) in afg.control_edges() {
        if Some((a, b)) != skip {
            m.entry(a).or_default().push(b);
        }
    }
    m
}

/// Explore every reachable `(node, state)`. `visit` sees the state on entry
/// to the node and returns the state on exit; `traverse` adjusts it along an
/// edge.
fn explore<S: Clone + Ord>(
    afg: &Afg,
    init: S,
    skip: Option<(NodeId, NodeId)>,
    mut visit: impl FnMut(&AfgNode, &S) -> S,
    traverse: impl Fn(NodeId, NodeId, &S) -> S,
) {
    let succ = successors(afg, skip);
    let mut seen: BTreeSet<(NodeId, S)> = BTreeSet::new();
    let mut queue = VecDeque::from([(afg.entry, init)]);
    while let Some((n, s)) = queue.pop_front() {
        if !seen.insert((n, s.clone())) {
            continue;
        }
        let out = visit(afg.node(n), &s);
        for &m in succ.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            queue.push_back((m, traverse(n, m, &out)));
        }
    }
}

/// Def-use pairs realized by some control path: the live definition of each
/// key is tracked along the path.
pub fn path_data_edges(afg: &Afg) -> BTreeSet<DataEdge> {
    let mut edges = BTreeSet::new();
    explore(
        afg,
        BTreeMap::<String, NodeId>::new(),
        None,
        |node, live| {
            for (k, d) in live {
                if node.uses.iter().any(|u| use_reads(u, k)) {
                    edges.insert((*d, node.id, k.clone()));
                }
            }
            let mut live = live.clone();
            if let Some(def) = &node.def {
                live.retain(|k, _| !overwrites(&def.var, k));
                live.insert(def.var.clone(), node.id);
            }
            live
        },
        |_, _, s| s.clone(),
    );
    edges
}

/// Def-use pairs of loop `idx` that need its back edge: pairs inside the
/// body seen only on paths where the definition travelled around the loop.
pub fn path_loop_carried(afg: &Afg, idx: usize) -> BTreeSet<DataEdge> {
    let l = &afg.loops[idx];
    let back = (l.end, l.head);
    let mut crossed = BTreeSet::new();
    let mut straight = BTreeSet::new();
    explore(
        afg,
        BTreeMap::<String, (NodeId, bool)>::new(),
        None,
        |node, live| {
            for (k, (d, c)) in live {
                if node.uses.iter().any(|u| use_reads(u, k)) {
                    let e = (*d, node.id, k.clone());
                    if *c {
                        crossed.insert(e);
                    } else {
                        straight.insert(e);
                    }
                }
            }
            let mut live = live.clone();
            if let Some(def) = &node.def {
                live.retain(|k, _| !overwrites(&def.var, k));
                live.insert(def.var.clone(), (node.id, false));
            }
            live
        },
        |a, b, s| {
            if (a, b) == back {
                s.iter().map(|(k, (d, _))| (k.clone(), (*d, true))).collect()
            } else {
                s.clone()
            }
        },
    );
    crossed.difference(&straight).filter(|(d, u, _)| l.body.contains(d) && l.body.contains(u)).cloned().collect()
}

fn outflow(n: &AfgNode) -> bool {
    n.kind == NodeKind::Render || n.kind == NodeKind::GlobalAssign || n.is_field_write()
}

/// Columns and associations of `q`'s result read on some path. The state
/// maps each variable to the part of `q`'s result it currently holds.
pub fn path_used_data(afg: &Afg, ir: &AppIR, q: NodeId) -> UsedData {
    let mut used = UsedData::default();
    let Some(desc) = afg.node(q).descriptor().cloned() else { return used };
    let model_of = |rel: &Relation| -> String {
        match rel {
            Relation::Root => desc.root_model.clone(),
            Relation::Assoc(a) => {
                ir.model(&desc.root_model).and_then(|m| m.association(a)).map(|a| a.target.clone()).unwrap_or_default()
            }
        }
    };
    let projected = |rel: &Relation| -> Vec<String> {
        desc.projection.iter().filter(|c| &c.relation == rel).map(|c| c.column.clone()).collect()
    };
    let mut marks: BTreeSet<(Relation, String)> = BTreeSet::new();
    let mut assocs = BTreeSet::new();
    explore(
        afg,
        BTreeMap::<String, Relation>::new(),
        None,
        |node, held| {
            let mut produced: Option<Relation> = None;
            for u in &node.uses {
                let Some(rel) = held.get(&u.var) else { continue };
                let copy = match &node.def {
                    Some(d) => match &d.binding {
                        Binding::Copy { from, access } if *from == u.var => Some(access.clone()),
                        _ => None,
                    },
                    None => None,
                };
                match (&u.access, rel) {
                    (Access::Whole, _) => {
                        if copy == Some(Access::Whole) {
                            produced = Some(rel.clone());
                        } else if outflow(node) {
                            for c in projected(rel) {
                                marks.insert((rel.clone(), c));
                            }
                        }
                    }
                    (Access::Column { column }, _) => {
                        marks.insert((rel.clone(), column.clone()));
                    }
                    (Access::Assoc { assoc }, Relation::Root) if desc.eager_loads.contains(assoc) => {
                        assocs.insert(assoc.clone());
                        let arel = Relation::Assoc(assoc.clone());
                        if copy == Some(Access::Assoc { assoc: assoc.clone() }) {
                            produced = Some(arel);
                        } else if outflow(node) {
                            for c in projected(&arel) {
                                marks.insert((arel.clone(), c));
                            }
                        }
                    }
                    (Access::AssocColumn { assoc, column }, Relation::Root) if desc.eager_loads.contains(assoc) => {
                        assocs.insert(assoc.clone());
                        marks.insert((Relation::Assoc(assoc.clone()), column.clone()));
                    }
                    _ => {}
                }
            }
            let mut held = held.clone();
            if let Some(def) = &node.def {
                held.retain(|k, _| !overwrites(&def.var, k));
                if node.id == q {
                    produced = Some(Relation::Root);
                }
                if let Some(r) = produced {
                    held.insert(def.var.clone(), r);
                }
            }
            held
        },
        |_, _, s| s.clone(),
    );
    for (rel, col) in marks {
        if col != "id" && projected(&rel).contains(&col) {
            used.columns.insert(ColumnRef { model: model_of(&rel), relation: rel, column: col });
        }
    }
    used.associations = assocs;
    used
}

/// Sinks of `q` by tracking which definition keys carry its result on
/// each path.
pub fn path_query_sinks(afg: &Afg, q: NodeId) -> BTreeSet<(SinkCategory, NodeId)> {
    let mut sinks = BTreeSet::new();
    explore(
        afg,
        BTreeSet::<String>::new(),
        None,
        |node, tainted| {
            let hit: Vec<&Access> =
                node.uses.iter().filter(|u| tainted.iter().any(|k| use_reads(u, k))).map(|u| &u.access).collect();
            let mut carries = node.id == q;
            if !hit.is_empty() {
                match node.kind {
                    NodeKind::Query => {
                        if hit.iter().any(|a| **a == Access::Chain) {
                            carries = true;
                        }
                        if hit.iter().any(|a| **a != Access::Chain) {
                            sinks.insert((SinkCategory::QueryParam, node.id));
                        }
                    }
                    NodeKind::Render | NodeKind::Link | NodeKind::Form => {
                        sinks.insert((SinkCategory::RenderedInView, node.id));
                    }
                    NodeKind::Branch => {
                        sinks.insert((SinkCategory::BranchCondition, node.id));
                    }
                    NodeKind::GlobalAssign => {
                        sinks.insert((SinkCategory::GlobalVariable, node.id));
                    }
                    _ => carries = true,
                }
            }
            let mut tainted = tainted.clone();
            if let Some(def) = &node.def {
                tainted.retain(|k| !overwrites(&def.var, k));
                if carries {
                    tainted.insert(def.var.clone());
                }
            }
            tainted
        },
        |_, _, s| s.clone(),
    );
    sinks
}

/// Source categories of `node` from the closure of `edges` (typically
/// [`path_data_edges`]), computed by naive fixpoint iteration.
pub fn closure_value_sources(afg: &Afg, edges: &BTreeSet<DataEdge>, node: NodeId) -> BTreeSet<SourceCategory> {
    let stop = |n: NodeId| matches!(afg.node(n).kind, NodeKind::Query | NodeKind::ParamRead);
    let mut reached: BTreeSet<NodeId> = BTreeSet::from([node]);
    let mut terminals: BTreeSet<NodeId> = BTreeSet::new();
    loop {
        let before = (reached.len(), terminals.len());
        for (d, u, _) in edges {
            if reached.contains(u) {
                if stop(*d) {
                    terminals.insert(*d);
                } else {
                    reached.insert(*d);
                }
            }
        }
        if (reached.len(), terminals.len()) == before {
            break;
        }
    }
    let mut out = BTreeSet::new();
    for t in &terminals {
        out.insert(if afg.node(*t).kind == NodeKind::Query {
            SourceCategory::ReadQuery
        } else {
            SourceCategory::UserInput
        });
    }
    for n in &reached {
        let nd = afg.node(*n);
        for l in &nd.leaves {
            out.insert(match l {
                ormlens_core::afg::Leaf::Const { .. } => SourceCategory::ConstantValue,
                ormlens_core::afg::Leaf::Utility { .. } => SourceCategory::UtilityCall,
            });
        }
        for u in nd.uses.iter().filter(|u| u.var.starts_with('@')) {
            if !edges.iter().any(|(_, to, k)| to == n && use_reads(u, k)) {
                out.insert(SourceCategory::GlobalVariable);
            }
        }
    }
    out
}

/// Hit, syntactic-equivalence and differing-result decisions per read by
/// re-scanning the whole log prefix for each entry.
pub fn rescan_cache_decisions(log: &SessionLog) -> Vec<(u64, bool, bool, bool)> {
    let es = &log.entries;
    let mut out = Vec::new();
    for (i, e) in es.iter().enumerate() {
        if !e.is_read() {
            continue;
        }
        let earlier = &es[..i];
        let covered = |table: &str, id: i64, cols: &[String]| {
            earlier.iter().enumerate().any(|(j, p)| {
                p.is_read()
                    && p.step < e.step
                    && p.rows
                        .iter()
                        .any(|r| r.table == table && r.id == id && cols.iter().all(|c| r.columns.contains(c)))
                    && !es[j + 1..i]
                        .iter()
                        .any(|w| !w.is_read() && w.rows.iter().any(|r| r.table == table && r.id == id))
            })
        };
        let hit = e.count.is_none() && !e.rows.is_empty() && e.rows.iter().all(|r| covered(&r.table, r.id, &r.columns));
        let peer: Option<&QueryLogEntry> =
            earlier.iter().rev().find(|p| p.is_read() && p.step < e.step && p.sql == e.sql);
        out.push((e.seq, hit, peer.is_some(), peer.is_some_and(|p| p.digest != e.digest)));
    }
    out
}
