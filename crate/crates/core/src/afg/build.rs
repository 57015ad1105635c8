use std::collections::{BTreeMap, BTreeSet};

use super::lower::{LExpr, LExprKind, LStmt, LStmtKind, LoweredAction};
use super::*;
use crate::app_model::AppIR;

pub(super) fn build_from_lowered(ir: &AppIR, lowered: &LoweredAction) -> Afg {
    let _ = ir;
    let mut b =
        Builder { nodes: Vec::new(), control: Vec::new(), loops: Vec::new(), temp: 0, key_nodes: BTreeMap::new() };
    let entry = b.add(NodeKind::Entry, Location::default(), Payload::None, Vec::new(), None, Vec::new(), &[]);
    let frontier = b.stmts(&lowered.body, vec![entry]);
    let exit_loc = Location::default();
    let exit = b.add(NodeKind::Exit, exit_loc, Payload::None, Vec::new(), None, Vec::new(), &frontier);

    let data = reaching_data_edges(&b.nodes, &b.control);
    let mut edges: Vec<AfgEdge> =
        b.control.iter().map(|&(from, to)| AfgEdge { from, to, kind: EdgeKind::Control, var: None }).collect();
    edges.extend(data.iter().map(|(from, to, var)| AfgEdge {
        from: *from,
        to: *to,
        kind: EdgeKind::Data,
        var: Some(var.clone()),
    }));

    let mut afg = Afg {
        action: lowered.action.clone(),
        method: lowered.method,
        nodes: b.nodes,
        edges,
        loops: b.loops,
        entry,
        exit,
    };
    resolve_sources(&mut afg);
    mark_deferred(&mut afg);
    afg
}

struct Builder {
    nodes: Vec<AfgNode>,
    control: Vec<(NodeId, NodeId)>,
    loops: Vec<LoopRegion>,
    temp: u32,
    key_nodes: BTreeMap<u32, NodeId>,
}

impl Builder {
    #[allow(clippy::too_many_arguments)]
    fn add(
        &mut self,
        kind: NodeKind,
        location: Location,
        payload: Payload,
        uses: Vec<Use>,
        def: Option<Def>,
        leaves: Vec<Leaf>,
        preds: &[NodeId],
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let mut dedup = Vec::new();
        for u in uses {
            if !dedup.contains(&u) {
                dedup.push(u);
            }
        }
        self.nodes.push(AfgNode { id, kind, location, payload, uses: dedup, def, leaves });
        for &p in preds {
            if !self.control.contains(&(p, id)) {
                self.control.push((p, id));
            }
        }
        id
    }

    fn stmts(&mut self, stmts: &[LStmt], mut frontier: Vec<NodeId>) -> Vec<NodeId> {
        for s in stmts {
            frontier = self.stmt(s, frontier);
        }
        frontier
    }

    fn stmt(&mut self, s: &LStmt, mut fr: Vec<NodeId>) -> Vec<NodeId> {
        let loc = s.loc;
        match &s.kind {
            LStmtKind::Assign { var, value } => {
                let v = self.flatten(value, &mut fr);
                let (uses, leaves) = collect(&v);
                let def = Def { var: var.clone(), binding: binding_of(&v) };
                let n =
                    self.add(NodeKind::Assign, loc, Payload::Var { name: var.clone() }, uses, Some(def), leaves, &fr);
                vec![n]
            }
            LStmtKind::FieldWrite { var, model, column, value } => {
                let v = self.flatten(value, &mut fr);
                let (uses, leaves) = collect(&v);
                let def = Def { var: format!("{var}.{column}"), binding: Binding::Fresh };
                let payload = Payload::FieldWrite { var: var.clone(), model: model.clone(), column: column.clone() };
                let n = self.add(NodeKind::Assign, loc, payload, uses, Some(def), leaves, &fr);
                vec![n]
            }
            LStmtKind::GlobalAssign { name, value } => {
                let v = self.flatten(value, &mut fr);
                let (uses, leaves) = collect(&v);
                let def = Def { var: format!("@{name}"), binding: binding_of(&v) };
                let n = self.add(
                    NodeKind::GlobalAssign,
                    loc,
                    Payload::Global { name: name.clone() },
                    uses,
                    Some(def),
                    leaves,
                    &fr,
                );
                vec![n]
            }
            LStmtKind::For { var, iter, body } => {
                let it = self.flatten(iter, &mut fr);
                let (uses, leaves) = collect(&it);
                let def = Def { var: var.clone(), binding: binding_of(&it) };
                let head =
                    self.add(NodeKind::LoopHead, loc, Payload::Loop { var: var.clone() }, uses, Some(def), leaves, &fr);
                let first = self.nodes.len() as u32;
                let body_fr = self.stmts(body, vec![head]);
                let end = self.add(
                    NodeKind::LoopEnd,
                    loc,
                    Payload::Loop { var: var.clone() },
                    Vec::new(),
                    None,
                    Vec::new(),
                    &body_fr,
                );
                self.control.push((end, head));
                let body_nodes = (first..end.0).map(NodeId).collect();
                self.loops.push(LoopRegion { head, end, body: body_nodes, var: var.clone() });
                vec![head]
            }
            LStmtKind::If { cond, then_body, else_body } => {
                let c = self.flatten(cond, &mut fr);
                let (uses, leaves) = collect(&c);
                let br = self.add(NodeKind::Branch, loc, Payload::None, uses, None, leaves, &fr);
                let mut out = self.stmts(then_body, vec![br]);
                for n in self.stmts(else_body, vec![br]) {
                    if !out.contains(&n) {
                        out.push(n);
                    }
                }
                out
            }
            LStmtKind::Render { args } => {
                let args: Vec<LExpr> = args.iter().map(|a| self.flatten(a, &mut fr)).collect();
                let (uses, leaves) = collect_all(&args);
                vec![self.add(NodeKind::Render, loc, Payload::None, uses, None, leaves, &fr)]
            }
            LStmtKind::Link { target, args } | LStmtKind::Form { target, args, .. } => {
                let (kind, method, fields) = match &s.kind {
                    LStmtKind::Form { fields, .. } => (NodeKind::Form, HttpMethod::Post, fields.clone()),
                    _ => (NodeKind::Link, HttpMethod::Get, Vec::new()),
                };
                let vals: Vec<LExpr> = args.iter().map(|(_, a)| self.flatten(a, &mut fr)).collect();
                let (uses, leaves) = collect_all(&vals);
                let payload = Payload::Target {
                    target: target.clone(),
                    method,
                    fields,
                    args: args.iter().map(|(n, _)| n.clone()).collect(),
                };
                vec![self.add(kind, loc, payload, uses, None, leaves, &fr)]
            }
            LStmtKind::Eval { expr } => {
                // Side effects (queries, parameter reads) become nodes; the
                // residual value is discarded.
                self.flatten(expr, &mut fr);
                fr
            }
            LStmtKind::NoOp { reason } => {
                vec![self.add(
                    NodeKind::NoOp,
                    loc,
                    Payload::NoOp { reason: reason.clone() },
                    Vec::new(),
                    None,
                    Vec::new(),
                    &fr,
                )]
            }
        }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.temp += 1;
        format!("%{prefix}{}", self.temp)
    }

    /// Emit nodes for parameter reads and queries inside `e` (evaluation
    /// order) and return `e` with those replaced by their temporaries.
    fn flatten(&mut self, e: &LExpr, fr: &mut Vec<NodeId>) -> LExpr {
        let loc = e.loc;
        let kind = match &e.kind {
            LExprKind::Param { name } => {
                let t = self.fresh("p");
                let def = Def { var: t.clone(), binding: Binding::Fresh };
                let n = self.add(
                    NodeKind::ParamRead,
                    loc,
                    Payload::Param { name: name.clone() },
                    Vec::new(),
                    Some(def),
                    Vec::new(),
                    fr,
                );
                *fr = vec![n];
                LExprKind::Var { name: t }
            }
            LExprKind::Query { query } => {
                let mut desc = query.descriptor.clone();
                for p in &mut desc.predicates {
                    p.value.expr = self.flatten(&p.value.expr, fr);
                }
                if let Some(l) = &mut desc.limit {
                    l.expr = self.flatten(&l.expr, fr);
                }
                if let Some(o) = &mut desc.offset {
                    o.expr = self.flatten(&o.expr, fr);
                }
                let slot_exprs: Vec<LExpr> = desc.slots().into_iter().map(|(_, v)| v.expr.clone()).collect();
                let (mut uses, leaves) = collect_all(&slot_exprs);
                if let Some((var, key)) = &query.base {
                    uses.push(Use::new(var, Access::Chain));
                    desc.chain_prefix_of = self.key_nodes.get(key).copied();
                }
                if let Some(var) = &query.target_var {
                    uses.push(Use::new(var, Access::Fields));
                }
                let t = self.fresh("q");
                let def = Def { var: t.clone(), binding: Binding::Fresh };
                let payload = Payload::Query { key: query.key, descriptor: desc, deferred: false };
                let n = self.add(NodeKind::Query, query.loc, payload, uses, Some(def), leaves, fr);
                self.key_nodes.insert(query.key, n);
                *fr = vec![n];
                LExprKind::Var { name: t }
            }
            LExprKind::Utility { name, args } => {
                LExprKind::Utility { name: name.clone(), args: args.iter().map(|a| self.flatten(a, fr)).collect() }
            }
            LExprKind::Field { recv, column } => {
                LExprKind::Field { recv: Box::new(self.flatten(recv, fr)), column: column.clone() }
            }
            LExprKind::Assoc { recv, assoc, model } => {
                LExprKind::Assoc { recv: Box::new(self.flatten(recv, fr)), assoc: assoc.clone(), model: model.clone() }
            }
            LExprKind::Binary { op, lhs, rhs } => {
                let l = self.flatten(lhs, fr);
                let r = self.flatten(rhs, fr);
                LExprKind::Binary { op: *op, lhs: Box::new(l), rhs: Box::new(r) }
            }
            LExprKind::Unary { op, operand } => {
                LExprKind::Unary { op: *op, operand: Box::new(self.flatten(operand, fr)) }
            }
            LExprKind::List { items } => LExprKind::List { items: items.iter().map(|i| self.flatten(i, fr)).collect() },
            other => other.clone(),
        };
        LExpr { loc, kind }
    }
}

fn binding_of(e: &LExpr) -> Binding {
    match &e.kind {
        LExprKind::Var { name } => Binding::Copy { from: name.clone(), access: Access::Whole },
        LExprKind::Global { name } => Binding::Copy { from: format!("@{name}"), access: Access::Whole },
        LExprKind::Assoc { recv, assoc, .. } => match &recv.kind {
            LExprKind::Var { name } => {
                Binding::Copy { from: name.clone(), access: Access::Assoc { assoc: assoc.clone() } }
            }
            _ => Binding::Fresh,
        },
        _ => Binding::Fresh,
    }
}

fn collect_all(es: &[LExpr]) -> (Vec<Use>, Vec<Leaf>) {
    let mut uses = Vec::new();
    let mut leaves = Vec::new();
    for e in es {
        collect_into(e, &mut uses, &mut leaves);
    }
    (uses, leaves)
}

fn collect(e: &LExpr) -> (Vec<Use>, Vec<Leaf>) {
    collect_all(std::slice::from_ref(e))
}

/// Variable reads and leaf value origins of a flattened expression.
pub(crate) fn collect_into(e: &LExpr, uses: &mut Vec<Use>, leaves: &mut Vec<Leaf>) {
    match &e.kind {
        LExprKind::Lit { value } => leaves.push(Leaf::Const { value: value.clone() }),
        LExprKind::Var { name } => uses.push(Use::new(name, Access::Whole)),
        LExprKind::Global { name } => uses.push(Use::new(format!("@{name}"), Access::Whole)),
        LExprKind::Utility { name, args } => {
            leaves.push(Leaf::Utility { name: name.clone() });
            for a in args {
                collect_into(a, uses, leaves);
            }
        }
        LExprKind::Field { recv, column } => match &recv.kind {
            LExprKind::Var { name } => uses.push(Use::new(name, Access::Column { column: column.clone() })),
            LExprKind::Assoc { recv: inner, assoc, .. } if matches!(inner.kind, LExprKind::Var { .. }) => {
                let LExprKind::Var { name } = &inner.kind else { unreachable!() };
                uses.push(Use::new(name, Access::AssocColumn { assoc: assoc.clone(), column: column.clone() }))
            }
            _ => collect_into(recv, uses, leaves),
        },
        LExprKind::Assoc { recv, assoc, .. } => match &recv.kind {
            LExprKind::Var { name } => uses.push(Use::new(name, Access::Assoc { assoc: assoc.clone() })),
            _ => collect_into(recv, uses, leaves),
        },
        LExprKind::Binary { lhs, rhs, .. } => {
            collect_into(lhs, uses, leaves);
            collect_into(rhs, uses, leaves);
        }
        LExprKind::Unary { operand, .. } => collect_into(operand, uses, leaves),
        LExprKind::List { items } => {
            for i in items {
                collect_into(i, uses, leaves);
            }
        }
        LExprKind::New { .. } | LExprKind::Param { .. } | LExprKind::Query { .. } => {}
    }
}

fn kills(killer: &str, victim: &str) -> bool {
    killer == victim || (!killer.contains('.') && victim.strip_prefix(killer).is_some_and(|r| r.starts_with('.')))
}

/// Classical iterative reaching definitions over `control`; returns one data
/// edge `(def node, use node, def key)` per definition reaching a matching use.
pub fn reaching_data_edges(nodes: &[AfgNode], control: &[(NodeId, NodeId)]) -> BTreeSet<(NodeId, NodeId, String)> {
    let n = nodes.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in control {
        preds[b.index()].push(a.index());
    }
    let defs: Vec<Option<&str>> = nodes.iter().map(|nd| nd.def.as_ref().map(|d| d.var.as_str())).collect();
    let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            let mut inset: BTreeSet<usize> = BTreeSet::new();
            for &p in &preds[i] {
                inset.extend(out[p].iter().copied());
            }
            if let Some(k) = defs[i] {
                inset.retain(|&d| !kills(k, defs[d].expect("def site")));
                inset.insert(i);
            }
            if inset != out[i] {
                out[i] = inset;
                changed = true;
            }
        }
    }
    let mut edges = BTreeSet::new();
    for (i, node) in nodes.iter().enumerate() {
        if node.uses.is_empty() {
            continue;
        }
        for &p in &preds[i] {
            for &d in &out[p] {
                let key = defs[d].expect("def site");
                if node.uses.iter().any(|u| u.matches_def(key)) {
                    edges.insert((NodeId(d as u32), NodeId(i as u32), key.to_string()));
                }
            }
        }
    }
    edges
}

/// Fill in `ValueExpr::sources` of every query slot.
fn resolve_sources(afg: &mut Afg) {
    let mut updates = Vec::new();
    for node in afg.query_nodes() {
        let Payload::Query { descriptor, .. } = &node.payload else { continue };
        let per_slot: Vec<Vec<ValueSource>> = descriptor
            .slots()
            .into_iter()
            .map(|(_, v)| {
                let (uses, leaves) = collect(&v.expr);
                let mut out = BTreeSet::new();
                for l in leaves {
                    out.insert(match l {
                        Leaf::Const { value } => ValueSource::Const { value },
                        Leaf::Utility { name } => ValueSource::Utility { name },
                    });
                }
                for u in &uses {
                    trace_use(afg, node.id, u, &mut out, &mut BTreeSet::new());
                }
                out.into_iter().collect()
            })
            .collect();
        updates.push((node.id, per_slot));
    }
    for (id, per_slot) in updates {
        let Payload::Query { descriptor, .. } = &mut afg.nodes[id.index()].payload else { continue };
        let mut it = per_slot.into_iter();
        for p in &mut descriptor.predicates {
            p.value.sources = it.next().unwrap_or_default();
        }
        if let Some(l) = &mut descriptor.limit {
            l.sources = it.next().unwrap_or_default();
        }
        if let Some(o) = &mut descriptor.offset {
            o.sources = it.next().unwrap_or_default();
        }
    }
}

fn access_column(a: &Access) -> Option<String> {
    match a {
        Access::Column { column } => Some(column.clone()),
        Access::AssocColumn { assoc, column } => Some(format!("{assoc}.{column}")),
        _ => None,
    }
}

fn compose(outer: &Access, inner: &Access) -> Option<Access> {
    match (outer, inner) {
        (Access::Whole, a) => Some(a.clone()),
        (Access::Assoc { assoc }, Access::Whole) => Some(Access::Assoc { assoc: assoc.clone() }),
        (Access::Assoc { assoc }, Access::Column { column }) => {
            Some(Access::AssocColumn { assoc: assoc.clone(), column: column.clone() })
        }
        _ => None,
    }
}

fn trace_use(afg: &Afg, at: NodeId, u: &Use, out: &mut BTreeSet<ValueSource>, seen: &mut BTreeSet<(NodeId, Use)>) {
    if !seen.insert((at, u.clone())) {
        return;
    }
    let mut reached = false;
    for e in afg.data_in(at) {
        let key = e.var.as_deref().unwrap_or_default();
        if !u.matches_def(key) {
            continue;
        }
        reached = true;
        let d = afg.node(e.from);
        match (&d.kind, &d.payload, &d.def) {
            (NodeKind::Query, ..) => {
                out.insert(ValueSource::QueryResult { node: d.id, column: access_column(&u.access) });
            }
            (_, Payload::Param { name }, _) => {
                out.insert(ValueSource::Param { name: name.clone() });
            }
            (_, _, Some(Def { binding: Binding::Copy { from, access }, .. })) => match compose(access, &u.access) {
                Some(a) => trace_use(afg, d.id, &Use::new(from, a), out, seen),
                None => {
                    out.insert(ValueSource::Var { node: d.id, column: access_column(&u.access) });
                }
            },
            _ => {
                out.insert(ValueSource::Var { node: d.id, column: access_column(&u.access) });
            }
        }
    }
    if !reached {
        if let Some(g) = u.var.strip_prefix('@') {
            out.insert(ValueSource::Global { name: g.to_string() });
        }
    }
}

/// A relation whose value only ever reaches `Chain` uses (through plain
/// copies) is never sent to the database.
fn mark_deferred(afg: &mut Afg) {
    let mut deferred = Vec::new();
    for q in afg.query_nodes() {
        let Some(d) = q.descriptor() else { continue };
        if !d.is_relation() {
            continue;
        }
        let mut stack = vec![q.id];
        let mut seen = BTreeSet::new();
        let mut issued = false;
        'walk: while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            for e in afg.data_out(n) {
                let key = e.var.as_deref().unwrap_or_default();
                let u = afg.node(e.to);
                for us in u.uses.iter().filter(|us| us.matches_def(key)) {
                    match (&us.access, &u.kind, &u.def) {
                        (Access::Chain, ..) => {}
                        (
                            Access::Whole,
                            NodeKind::Assign,
                            Some(Def { binding: Binding::Copy { access: Access::Whole, from }, .. }),
                        ) if *from == us.var => stack.push(u.id),
                        _ => {
                            issued = true;
                            break 'walk;
                        }
                    }
                }
            }
        }
        if !issued {
            deferred.push(q.id);
        }
    }
    for id in deferred {
        if let Payload::Query { deferred, .. } = &mut afg.nodes[id.index()].payload {
            *deferred = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::afg::*;
    use crate::app_model::parse_app;

    fn afg(src: &str, c: &str, a: &str) -> Afg {
        let ir = parse_app(src).unwrap();
        build_afg(&ir, &ActionId::new(c, a)).unwrap()
    }

    const TODO: &str = "model Todo { field state: string(20) field pred_id: int field proj_id: int
                         belongs_to pred: Todo belongs_to proj: Proj }
                        model Proj { field name: string(40) }
                        model Blog { field title: string(40) }
                        model Comment { field blog_id: int field body: text }";

    #[test]
    fn helper_recursion_leaves_one_noop() {
        let g = afg("def f() { f() } controller C { action a() { f() } }", "C", "a");
        let kinds: Vec<NodeKind> = g.nodes.iter().map(|n| n.kind).collect();
        assert_eq!(kinds, vec![NodeKind::Entry, NodeKind::NoOp, NodeKind::Exit]);
    }

    #[test]
    fn loop_structure() {
        let src = format!(
            "{TODO} controller C {{ action a() {{ for b in Blog.all {{ render(Comment.where(blog_id == b.id)) }} }} }}"
        );
        let g = afg(&src, "C", "a");
        assert_eq!(g.loops.len(), 1);
        let l = &g.loops[0];
        assert!(g.control_edges().any(|e| e == (l.end, l.head)));
        let inner = g.query_nodes().filter(|q| g.in_loop(q.id)).count();
        assert_eq!(inner, 1);
        // The Comment query reads the loop variable.
        let cq = g.query_nodes().find(|q| g.in_loop(q.id)).unwrap();
        assert!(g.data_in(cq.id).any(|e| e.from == l.head));
        let d = cq.descriptor().unwrap();
        assert_eq!(
            d.predicates[0].value.sources,
            vec![ValueSource::QueryResult { node: g.query_nodes().next().unwrap().id, column: Some("id".into()) }]
        );
    }

    #[test]
    fn both_branch_arms_reach_join() {
        let src = format!("{TODO} controller C {{ action a(x) {{ let t = 1 if param(:x) > 1 {{ t = 2 }} else {{ t = 3 }} render(t) }} }}");
        let g = afg(&src, "C", "a");
        let render = g.nodes.iter().find(|n| n.kind == NodeKind::Render).unwrap();
        assert_eq!(g.data_in(render.id).count(), 2);
    }

    #[test]
    fn extended_relation_is_deferred() {
        let src = format!(
            "{TODO} controller C {{ action a() {{ let t = Todo.where(state == \"a\") if t.any {{ for x in t.includes(proj) {{ render(x) }} }} }} }}"
        );
        let g = afg(&src, "C", "a");
        let qs: Vec<&AfgNode> = g.query_nodes().collect();
        assert_eq!(qs.len(), 3);
        assert!(!qs[0].is_issued_query());
        assert!(qs[1].is_issued_query() && qs[2].is_issued_query());
        assert_eq!(qs[1].descriptor().unwrap().chain_prefix_of, Some(qs[0].id));
        assert_eq!(qs[2].descriptor().unwrap().chain_prefix_of, Some(qs[0].id));
    }

    #[test]
    fn field_write_defines_column_key() {
        let src =
            format!("{TODO} controller C {{ action a POST (s) {{ let t = Todo.new t.state = param(:s) t.save }} }}");
        let g = afg(&src, "C", "a");
        let save = g.query_nodes().next().unwrap();
        let from: Vec<String> = g.data_in(save.id).map(|e| e.var.clone().unwrap()).collect();
        assert_eq!(from, vec!["t".to_string(), "t.state".to_string()]);
        assert_eq!(save.descriptor().unwrap().kind, QueryKind::Insert);
    }

    #[test]
    fn deterministic() {
        let src = format!("{TODO} controller C {{ action a() {{ for t in Todo.all {{ render(t.pred.state) }} }} }}");
        assert_eq!(afg(&src, "C", "a"), afg(&src, "C", "a"));
    }
}
