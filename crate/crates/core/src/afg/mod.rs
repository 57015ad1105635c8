//! Action Flow Graphs: one graph per action with control and data edges,
//! plus next-action edges between actions.

mod build;
pub mod dataflow;
mod dot;
pub mod lower;
pub mod query;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{ActionId, AppIR, Diagnostic, HttpMethod, Location};
use crate::value::Value;
pub use build::reaching_data_edges;
pub use dataflow::{query_sinks, used_columns, value_sources, SinkCategory, SourceCategory};
pub use dot::to_dot;
pub use query::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Entry,
    Exit,
    Query,
    Render,
    Branch,
    LoopHead,
    LoopEnd,
    Assign,
    GlobalAssign,
    Link,
    Form,
    ParamRead,
    NoOp,
}

/// How a node reads a variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "access", rename_all = "snake_case")]
pub enum Access {
    Whole,
    Column {
        column: String,
    },
    Assoc {
        assoc: String,
    },
    AssocColumn {
        assoc: String,
        column: String,
    },
    /// The variable's stored query is extended into a new query.
    Chain,
    /// The fields written on a record (for `save`).
    Fields,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Use {
    pub var: String,
    #[serde(flatten)]
    pub access: Access,
}

impl Use {
    pub fn new(var: impl Into<String>, access: Access) -> Self {
        Use { var: var.into(), access }
    }

    /// Whether a definition of `key` (a variable or `var.column`) can
    /// supply the value read by this use.
    pub fn matches_def(&self, key: &str) -> bool {
        if key == self.var {
            return true;
        }
        match key.strip_prefix(self.var.as_str()).and_then(|r| r.strip_prefix('.')) {
            Some(col) => match &self.access {
                Access::Column { column } => column == col,
                Access::Fields | Access::Whole => true,
                _ => false,
            },
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "binding", rename_all = "snake_case")]
pub enum Binding {
    Fresh,
    /// The defined variable is (part of) another variable's value.
    Copy {
        from: String,
        #[serde(flatten)]
        access: Access,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Def {
    /// Variable name, `@global`, or `var.column` for a field write.
    pub var: String,
    #[serde(flatten)]
    pub binding: Binding,
}

/// A value origin inside a node's own expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "leaf", rename_all = "snake_case")]
pub enum Leaf {
    Const { value: Value },
    Utility { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Payload {
    None,
    Query {
        key: u32,
        descriptor: QueryDescriptor,
        /// A relation only ever extended (or unused) is never sent.
        deferred: bool,
    },
    Target {
        target: ActionId,
        method: HttpMethod,
        fields: Vec<String>,
        args: Vec<String>,
    },
    Var {
        name: String,
    },
    FieldWrite {
        var: String,
        model: String,
        column: String,
    },
    Global {
        name: String,
    },
    Param {
        name: String,
    },
    Loop {
        var: String,
    },
    NoOp {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub location: Location,
    pub payload: Payload,
    pub uses: Vec<Use>,
    pub def: Option<Def>,
    pub leaves: Vec<Leaf>,
}

impl AfgNode {
    pub fn descriptor(&self) -> Option<&QueryDescriptor> {
        match &self.payload {
            Payload::Query { descriptor, .. } => Some(descriptor),
            _ => None,
        }
    }

    pub fn is_issued_query(&self) -> bool {
        matches!(self.payload, Payload::Query { deferred: false, .. })
    }

    pub fn query_key(&self) -> Option<u32> {
        match &self.payload {
            Payload::Query { key, .. } => Some(*key),
            _ => None,
        }
    }

    /// True for an assignment to a model column.
    pub fn is_field_write(&self) -> bool {
        matches!(self.payload, Payload::FieldWrite { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Control,
    Data,
    NextAction,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AfgEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    /// Definition key carried by a data edge.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub var: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopRegion {
    pub head: NodeId,
    pub end: NodeId,
    /// Nodes strictly between head and end, nested loops included.
    pub body: BTreeSet<NodeId>,
    pub var: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Afg {
    pub action: ActionId,
    pub method: HttpMethod,
    pub nodes: Vec<AfgNode>,
    pub edges: Vec<AfgEdge>,
    pub loops: Vec<LoopRegion>,
    pub entry: NodeId,
    pub exit: NodeId,
}

impl Afg {
    pub fn node(&self, id: NodeId) -> &AfgNode {
        &self.nodes[id.index()]
    }

    pub fn control_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Control).map(|e| (e.from, e.to))
    }

    pub fn data_edges(&self) -> impl Iterator<Item = &AfgEdge> + '_ {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Data)
    }

    pub fn data_out(&self, n: NodeId) -> impl Iterator<Item = &AfgEdge> + '_ {
        self.data_edges().filter(move |e| e.from == n)
    }

    pub fn data_in(&self, n: NodeId) -> impl Iterator<Item = &AfgEdge> + '_ {
        self.data_edges().filter(move |e| e.to == n)
    }

    pub fn query_nodes(&self) -> impl Iterator<Item = &AfgNode> + '_ {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Query)
    }

    /// Query nodes whose SQL is actually sent to the database.
    pub fn issued_queries(&self) -> impl Iterator<Item = &AfgNode> + '_ {
        self.nodes.iter().filter(|n| n.is_issued_query())
    }

    pub fn node_for_key(&self, key: u32) -> Option<&AfgNode> {
        self.nodes.iter().find(|n| n.query_key() == Some(key))
    }

    pub fn in_loop(&self, n: NodeId) -> bool {
        self.loops.iter().any(|l| l.body.contains(&n))
    }
}

/// A next-action edge: the `via` node (Link or Form) of `from` requests `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NextActionEdge {
    pub from: ActionId,
    pub to: ActionId,
    pub via: NodeId,
    pub method: HttpMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGraph {
    pub afgs: BTreeMap<ActionId, Afg>,
    pub edges: Vec<NextActionEdge>,
}

impl ActionGraph {
    pub fn outgoing<'g>(&'g self, a: &'g ActionId) -> impl Iterator<Item = &'g NextActionEdge> + 'g {
        self.edges.iter().filter(move |e| &e.from == a)
    }

    pub fn afg(&self, a: &ActionId) -> Option<&Afg> {
        self.afgs.get(a)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AfgError {
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("{location}: link target {target} is not routed")]
    UnroutedTarget { target: String, location: Location },
    #[error("action {action} does not validate: {}", .diagnostics.first().map(|d| d.to_string()).unwrap_or_default())]
    Invalid { action: String, diagnostics: Vec<Diagnostic> },
}

/// Build the AFG of one action.
pub fn build_afg(ir: &AppIR, action: &ActionId) -> Result<Afg, AfgError> {
    if ir.action(action).is_none() {
        return Err(AfgError::UnknownAction(action.to_string()));
    }
    let lowered = lower::lower_action(ir, action)
        .map_err(|diagnostics| AfgError::Invalid { action: action.to_string(), diagnostics })?;
    Ok(build::build_from_lowered(ir, &lowered))
}

/// Build AFGs for every action in parallel (results in action order).
pub fn build_all_afgs(ir: &AppIR) -> Result<Vec<Afg>, AfgError> {
    ir.action_ids().par_iter().map(|id| build_afg(ir, id)).collect()
}

/// Connect AFGs through their Link and Form nodes.
pub fn build_action_graph(ir: &AppIR, afgs: Vec<Afg>) -> Result<ActionGraph, AfgError> {
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    for afg in &afgs {
        for n in &afg.nodes {
            let Payload::Target { target, method, .. } = &n.payload else { continue };
            if ir.action(target).is_none() {
                return Err(AfgError::UnroutedTarget { target: target.to_string(), location: n.location });
            }
            let e = NextActionEdge { from: afg.action.clone(), to: target.clone(), via: n.id, method: *method };
            if seen.insert((e.from.clone(), e.to.clone(), e.via)) {
                edges.push(e);
            }
        }
    }
    Ok(ActionGraph { afgs: afgs.into_iter().map(|a| (a.action.clone(), a)).collect(), edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::parse_app;

    #[test]
    fn use_matching() {
        let u = Use::new("x", Access::Column { column: "a".into() });
        assert!(u.matches_def("x"));
        assert!(u.matches_def("x.a"));
        assert!(!u.matches_def("x.b"));
        assert!(!u.matches_def("xy"));
        assert!(Use::new("x", Access::Fields).matches_def("x.b"));
        assert!(!Use::new("x", Access::Chain).matches_def("x.b"));
    }

    #[test]
    fn empty_action_has_two_nodes() {
        let ir = parse_app("controller C { action a() { } }").unwrap();
        let afg = build_afg(&ir, &ActionId::new("C", "a")).unwrap();
        assert_eq!(afg.nodes.len(), 2);
        assert_eq!(afg.control_edges().collect::<Vec<_>>(), vec![(afg.entry, afg.exit)]);
    }

    #[test]
    fn unknown_action() {
        let ir = parse_app("").unwrap();
        assert!(matches!(build_afg(&ir, &ActionId::new("C", "a")), Err(AfgError::UnknownAction(_))));
    }

    #[test]
    fn next_action_edges_per_link_node() {
        let ir = parse_app(
            "controller C { action a() { link_to C.b() link_to C.b() form_to C.p(x) }
                            action b() { } action p POST (x) { } }",
        )
        .unwrap();
        let g = build_action_graph(&ir, build_all_afgs(&ir).unwrap()).unwrap();
        let a = ActionId::new("C", "a");
        let from_a: Vec<_> = g.outgoing(&a).collect();
        assert_eq!(from_a.len(), 3);
        assert_eq!(from_a.iter().filter(|e| e.method == HttpMethod::Post).count(), 1);
        assert_eq!(g.outgoing(&ActionId::new("C", "b")).count(), 0);
    }
}
