//! Lowering of one action body: helpers are inlined by substitution (with
//! fresh names for their locals), query chains become [`QueryExpr`]s with a
//! resolved [`QueryDescriptor`], and member accesses are typed as column
//! reads or association traversals. Both the AFG builder and the simulator
//! consume the lowered body.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::query::*;
use crate::app_model::*;
use crate::value::Value;

/// Builtin utility functions (pure, no database access).
pub const UTILITIES: &[&str] = &["now", "today", "len", "concat", "lower", "upper", "abs"];

const QUERY_METHODS: &[&str] =
    &["where", "includes", "order", "group", "select", "limit", "offset", "find", "count", "any", "all"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoweredAction {
    pub action: ActionId,
    pub method: HttpMethod,
    pub params: Vec<String>,
    pub body: Vec<LStmt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LStmt {
    pub loc: Location,
    pub kind: LStmtKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stmt", rename_all = "snake_case")]
pub enum LStmtKind {
    Assign { var: String, value: LExpr },
    FieldWrite { var: String, model: String, column: String, value: LExpr },
    GlobalAssign { name: String, value: LExpr },
    For { var: String, iter: LExpr, body: Vec<LStmt> },
    If { cond: LExpr, then_body: Vec<LStmt>, else_body: Vec<LStmt> },
    Render { args: Vec<LExpr> },
    Link { target: ActionId, args: Vec<(String, LExpr)> },
    Form { target: ActionId, fields: Vec<String>, args: Vec<(String, LExpr)> },
    Eval { expr: LExpr },
    NoOp { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LExpr {
    pub loc: Location,
    pub kind: LExprKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "snake_case")]
pub enum LExprKind {
    Lit { value: Value },
    Var { name: String },
    Global { name: String },
    Param { name: String },
    Utility { name: String, args: Vec<LExpr> },
    Field { recv: Box<LExpr>, column: String },
    Assoc { recv: Box<LExpr>, assoc: String, model: String },
    Query { query: Box<QueryExpr> },
    New { model: String },
    Binary { op: BinOp, lhs: Box<LExpr>, rhs: Box<LExpr> },
    Unary { op: UnOp, operand: Box<LExpr> },
    List { items: Vec<LExpr> },
}

impl LExpr {
    pub fn as_literal(&self) -> Option<&Value> {
        match &self.kind {
            LExprKind::Lit { value } => Some(value),
            _ => None,
        }
    }

    fn lit(loc: Location, value: Value) -> Self {
        LExpr { loc, kind: LExprKind::Lit { value } }
    }
}

/// A query chain occurrence. `key` is unique within the lowered action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryExpr {
    pub key: u32,
    pub loc: Location,
    pub descriptor: QueryDescriptor,
    /// Stored query being extended: (variable, key of its query).
    pub base: Option<(String, u32)>,
    /// Record written by an insert/update.
    pub target_var: Option<String>,
}

/// Static type of a lowered value.
#[derive(Debug, Clone, PartialEq)]
enum VType {
    Unknown,
    Scalar,
    Record(String),
    Rows(String),
}

#[derive(Debug, Clone)]
struct Origin {
    key: u32,
    descriptor: QueryDescriptor,
}

#[derive(Debug, Clone)]
struct VarInfo {
    ty: VType,
    origin: Option<Origin>,
}

struct Typed {
    expr: LExpr,
    ty: VType,
    origin: Option<Origin>,
}

impl Typed {
    fn plain(expr: LExpr, ty: VType) -> Self {
        Typed { expr, ty, origin: None }
    }
}

/// Lower one action. All problems found are returned together.
pub fn lower_action(ir: &AppIR, id: &ActionId) -> Result<LoweredAction, Vec<Diagnostic>> {
    let Some(action) = ir.action(id) else {
        return Err(vec![Diagnostic::unresolved(id.to_string(), Location::default())]);
    };
    let mut globals = BTreeSet::new();
    let mut collect = |s: &Stmt| {
        if let StmtKind::Global { name, .. } = &s.kind {
            globals.insert(name.clone());
        }
    };
    for c in &ir.controllers {
        for a in &c.actions {
            walk_stmts(&a.body, &mut collect);
        }
    }
    for h in &ir.helpers {
        walk_stmts(&h.body, &mut collect);
    }
    let mut l = Lowerer {
        ir,
        action,
        globals,
        diags: Vec::new(),
        next_key: 0,
        inline_counter: 0,
        stack: Vec::new(),
        frames: vec![Frame { suffix: String::new(), scopes: vec![BTreeMap::new()] }],
        vars: BTreeMap::new(),
        writes: BTreeMap::new(),
        new_objects: BTreeSet::new(),
    };
    let body = l.stmts(&action.body);
    if l.diags.is_empty() {
        Ok(LoweredAction { action: id.clone(), method: action.method, params: action.params.clone(), body })
    } else {
        l.diags.sort();
        l.diags.dedup();
        Err(l.diags)
    }
}

struct Frame {
    suffix: String,
    scopes: Vec<BTreeMap<String, String>>,
}

struct Lowerer<'a> {
    ir: &'a AppIR,
    action: &'a ActionDecl,
    globals: BTreeSet<String>,
    diags: Vec<Diagnostic>,
    next_key: u32,
    inline_counter: u32,
    stack: Vec<String>,
    frames: Vec<Frame>,
    vars: BTreeMap<String, VarInfo>,
    writes: BTreeMap<String, BTreeSet<String>>,
    new_objects: BTreeSet<String>,
}

impl<'a> Lowerer<'a> {
    // -- scopes -------------------------------------------------------------

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("frame")
    }

    fn push_scope(&mut self) {
        self.frame().scopes.push(BTreeMap::new());
    }

    fn pop_scope(&mut self) {
        self.frame().scopes.pop();
    }

    fn declare(&mut self, name: &str, info: VarInfo) -> String {
        let renamed = format!("{name}{}", self.frame().suffix);
        self.frame().scopes.last_mut().expect("scope").insert(name.to_string(), renamed.clone());
        self.vars.insert(renamed.clone(), info);
        self.writes.remove(&renamed);
        self.new_objects.remove(&renamed);
        renamed
    }

    fn resolve(&self, name: &str) -> Option<String> {
        let frame = self.frames.last()?;
        frame.scopes.iter().rev().find_map(|s| s.get(name).cloned())
    }

    fn temp(&mut self, prefix: &str, info: VarInfo) -> String {
        self.next_key += 1;
        let name = format!("%{prefix}{}", self.next_key);
        self.vars.insert(name.clone(), info);
        name
    }

    fn fresh_key(&mut self) -> u32 {
        self.next_key += 1;
        self.next_key
    }

    fn err(&mut self, d: Diagnostic) {
        self.diags.push(d);
    }

    // -- statements ---------------------------------------------------------

    fn stmts(&mut self, stmts: &[Stmt]) -> Vec<LStmt> {
        let mut out = Vec::new();
        for s in stmts {
            self.stmt(s, &mut out);
        }
        out
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<LStmt>) {
        let loc = s.loc;
        match &s.kind {
            StmtKind::Let { name, value } => {
                let t = self.expr(value, out);
                let var = self.declare(name, VarInfo { ty: t.ty, origin: t.origin });
                if let LExprKind::New { .. } = t.expr.kind {
                    self.new_objects.insert(var.clone());
                }
                out.push(LStmt { loc, kind: LStmtKind::Assign { var, value: t.expr } });
            }
            StmtKind::Assign { name, value } => {
                let t = self.expr(value, out);
                let Some(var) = self.resolve(name) else {
                    self.err(Diagnostic::unresolved(name, loc));
                    return;
                };
                let is_new = matches!(t.expr.kind, LExprKind::New { .. });
                self.vars.insert(var.clone(), VarInfo { ty: t.ty, origin: t.origin });
                if is_new {
                    self.new_objects.insert(var.clone());
                }
                out.push(LStmt { loc, kind: LStmtKind::Assign { var, value: t.expr } });
            }
            StmtKind::FieldAssign { target, field, value } => {
                let t = self.expr(value, out);
                let Some(var) = self.resolve(target) else {
                    self.err(Diagnostic::unresolved(target, loc));
                    return;
                };
                let model = match self.vars.get(&var).map(|v| v.ty.clone()) {
                    Some(VType::Record(m)) => m,
                    _ => {
                        self.err(Diagnostic::type_error(format!("`{target}` is not a single record"), loc));
                        return;
                    }
                };
                let m = self.ir.model(&model).expect("typed model exists");
                if field == "id" || m.field(field).is_none() {
                    self.err(Diagnostic::unresolved(format!("{model}.{field}"), loc));
                    return;
                }
                self.writes.entry(var.clone()).or_default().insert(field.clone());
                out.push(LStmt {
                    loc,
                    kind: LStmtKind::FieldWrite { var, model, column: field.clone(), value: t.expr },
                });
            }
            StmtKind::Global { name, value } => {
                let t = self.expr(value, out);
                out.push(LStmt { loc, kind: LStmtKind::GlobalAssign { name: name.clone(), value: t.expr } });
            }
            StmtKind::For { var, iter, body } => {
                let t = self.expr(iter, out);
                let elem = match &t.ty {
                    VType::Rows(m) => VType::Record(m.clone()),
                    VType::Unknown => VType::Unknown,
                    VType::Scalar => VType::Unknown,
                    VType::Record(_) => {
                        self.err(Diagnostic::type_error("cannot iterate over a single record", iter.loc));
                        VType::Unknown
                    }
                };
                self.push_scope();
                let v = self.declare(var, VarInfo { ty: elem, origin: None });
                let lbody = self.stmts(body);
                self.pop_scope();
                out.push(LStmt { loc, kind: LStmtKind::For { var: v, iter: t.expr, body: lbody } });
            }
            StmtKind::If { cond, then_body, else_body } => {
                let c = self.expr(cond, out);
                self.push_scope();
                let tb = self.stmts(then_body);
                self.pop_scope();
                self.push_scope();
                let eb = self.stmts(else_body);
                self.pop_scope();
                out.push(LStmt { loc, kind: LStmtKind::If { cond: c.expr, then_body: tb, else_body: eb } });
            }
            StmtKind::Render { args } => {
                let args = args.iter().map(|a| self.expr(a, out).expr).collect();
                out.push(LStmt { loc, kind: LStmtKind::Render { args } });
            }
            StmtKind::LinkTo { controller, action, args } => {
                let target = ActionId::new(controller, action);
                self.check_target(&target, HttpMethod::Get, args.iter().map(|a| &a.name), loc);
                let args = args.iter().map(|a| (a.name.clone(), self.expr(&a.value, out).expr)).collect();
                out.push(LStmt { loc, kind: LStmtKind::Link { target, args } });
            }
            StmtKind::FormTo { controller, action, fields, args } => {
                let target = ActionId::new(controller, action);
                self.check_target(&target, HttpMethod::Post, fields.iter().chain(args.iter().map(|a| &a.name)), loc);
                let args = args.iter().map(|a| (a.name.clone(), self.expr(&a.value, out).expr)).collect();
                out.push(LStmt { loc, kind: LStmtKind::Form { target, fields: fields.clone(), args } });
            }
            StmtKind::Return { .. } => {
                // Only reachable for misplaced returns, which validation reports.
            }
            StmtKind::Expr { expr } => {
                let t = self.expr(expr, out);
                out.push(LStmt { loc, kind: LStmtKind::Eval { expr: t.expr } });
            }
        }
    }

    fn check_target<'n>(
        &mut self,
        target: &ActionId,
        method: HttpMethod,
        names: impl Iterator<Item = &'n String>,
        loc: Location,
    ) {
        let Some(decl) = self.ir.action(target) else {
            self.err(Diagnostic::unresolved(target.to_string(), loc));
            return;
        };
        if decl.method != method {
            self.err(Diagnostic {
                location: loc,
                kind: DiagnosticKind::RouteConflict {
                    target: target.to_string(),
                    message: format!("reached via {method} but declared {}", decl.method),
                },
            });
        }
        for n in names {
            if !decl.params.contains(n) {
                self.err(Diagnostic::unresolved(format!("{target}:{n}"), loc));
            }
        }
    }

    // -- expressions --------------------------------------------------------

    fn expr(&mut self, e: &Expr, out: &mut Vec<LStmt>) -> Typed {
        let loc = e.loc;
        match &e.kind {
            ExprKind::Int { value } => Typed::plain(LExpr::lit(loc, Value::Int(*value)), VType::Scalar),
            ExprKind::Float { value } => Typed::plain(LExpr::lit(loc, Value::Float(*value)), VType::Scalar),
            ExprKind::Str { value } => Typed::plain(LExpr::lit(loc, Value::Str(value.clone())), VType::Scalar),
            ExprKind::Bool { value } => Typed::plain(LExpr::lit(loc, Value::Bool(*value)), VType::Scalar),
            ExprKind::Nil => Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown),
            ExprKind::Ident { name } => self.ident(name, loc),
            ExprKind::Param { name } => {
                if !self.action.params.contains(name) {
                    self.err(Diagnostic::unresolved(format!(":{name}"), loc));
                }
                Typed::plain(LExpr { loc, kind: LExprKind::Param { name: name.clone() } }, VType::Scalar)
            }
            ExprKind::Call { name, args } => self.call(name, args, loc, out),
            ExprKind::Method { .. } => self.method_chain(e, out),
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs, out);
                let r = self.expr(rhs, out);
                Typed::plain(
                    LExpr { loc, kind: LExprKind::Binary { op: *op, lhs: Box::new(l.expr), rhs: Box::new(r.expr) } },
                    VType::Scalar,
                )
            }
            ExprKind::Unary { op, operand } => {
                let o = self.expr(operand, out);
                Typed::plain(
                    LExpr { loc, kind: LExprKind::Unary { op: *op, operand: Box::new(o.expr) } },
                    VType::Scalar,
                )
            }
            ExprKind::List { items } => {
                let items = items.iter().map(|i| self.expr(i, out).expr).collect();
                Typed::plain(LExpr { loc, kind: LExprKind::List { items } }, VType::Scalar)
            }
        }
    }

    fn ident(&mut self, name: &str, loc: Location) -> Typed {
        if let Some(var) = self.resolve(name) {
            let info = self.vars.get(&var).cloned().unwrap_or(VarInfo { ty: VType::Unknown, origin: None });
            return Typed { expr: LExpr { loc, kind: LExprKind::Var { name: var } }, ty: info.ty, origin: info.origin };
        }
        if self.globals.contains(name) {
            return Typed::plain(LExpr { loc, kind: LExprKind::Global { name: name.to_string() } }, VType::Unknown);
        }
        if self.ir.model(name).is_some() {
            self.err(Diagnostic::type_error(format!("model `{name}` used as a value"), loc));
        } else {
            self.err(Diagnostic::unresolved(name, loc));
        }
        Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown)
    }

    fn call(&mut self, name: &str, args: &[Arg], loc: Location, out: &mut Vec<LStmt>) -> Typed {
        if let Some(helper) = self.ir.helper(name) {
            return self.inline(helper, args, loc, out);
        }
        if UTILITIES.contains(&name) {
            let args = args.iter().map(|a| self.expr(&a.value, out).expr).collect();
            return Typed::plain(
                LExpr { loc, kind: LExprKind::Utility { name: name.to_string(), args } },
                VType::Scalar,
            );
        }
        self.err(Diagnostic::unresolved(name, loc));
        Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown)
    }

    /// Inline a helper call. A helper already on the inline stack is cut at
    /// depth one: the nested call becomes a no-op returning nil.
    fn inline(&mut self, helper: &'a HelperDecl, args: &[Arg], loc: Location, out: &mut Vec<LStmt>) -> Typed {
        if self.stack.contains(&helper.name) {
            out.push(LStmt { loc, kind: LStmtKind::NoOp { reason: format!("recursive call to {}", helper.name) } });
            return Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown);
        }
        if args.len() != helper.params.len() {
            self.err(Diagnostic::type_error(
                format!("{} expects {} argument(s), got {}", helper.name, helper.params.len(), args.len()),
                loc,
            ));
        }
        let lowered_args: Vec<Typed> = args.iter().map(|a| self.expr(&a.value, out)).collect();
        self.inline_counter += 1;
        let suffix = format!("#{}", self.inline_counter);
        self.frames.push(Frame { suffix, scopes: vec![BTreeMap::new()] });
        self.stack.push(helper.name.clone());
        for (p, a) in helper.params.iter().zip(lowered_args) {
            let declared = match &p.ty {
                TypeAnn::Field(_) => VType::Scalar,
                TypeAnn::Record(m) => VType::Record(m.clone()),
                TypeAnn::Rows(m) => VType::Rows(m.clone()),
            };
            let ty = if a.ty == VType::Unknown { declared } else { a.ty };
            let var = self.declare(&p.name, VarInfo { ty, origin: a.origin });
            out.push(LStmt { loc: a.expr.loc, kind: LStmtKind::Assign { var, value: a.expr } });
        }
        let (body, ret) = match helper.body.split_last() {
            Some((last, init)) => match &last.kind {
                StmtKind::Return { value } => (init, Some((last, value))),
                _ => (&helper.body[..], None),
            },
            None => (&helper.body[..], None),
        };
        for s in body {
            self.stmt(s, out);
        }
        let result = match ret {
            Some((_, value)) => self.expr(value, out),
            None => Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown),
        };
        self.stack.pop();
        self.frames.pop();
        result
    }

    /// Lower `recv.m1(..).m2 ...`. The longest prefix of query-builder calls
    /// starting at a model or a stored relation becomes one query.
    fn method_chain(&mut self, e: &Expr, out: &mut Vec<LStmt>) -> Typed {
        let mut segs: Vec<&Expr> = Vec::new();
        let mut root = e;
        while let ExprKind::Method { recv, .. } = &root.kind {
            segs.push(root);
            root = recv;
        }
        segs.reverse();

        let mut idx = 0;
        let mut cur: Typed = match &root.kind {
            ExprKind::Ident { name } if self.resolve(name).is_none() && self.ir.model(name).is_some() => {
                let model = self.ir.model(name).expect("checked");
                let (first, first_args) = seg_parts(segs[0]);
                match first {
                    "new" => {
                        idx = 1;
                        Typed::plain(
                            LExpr { loc: root.loc, kind: LExprKind::New { model: model.name.clone() } },
                            VType::Record(model.name.clone()),
                        )
                    }
                    "create" => {
                        idx = 1;
                        self.create(model, first_args.unwrap_or(&[]), root.loc, out)
                    }
                    m if QUERY_METHODS.contains(&m) => {
                        let n = segs.iter().take_while(|s| QUERY_METHODS.contains(&seg_parts(s).0)).count();
                        idx = n;
                        let desc = QueryDescriptor::select(model);
                        self.build_query(desc, None, &segs[..n], root.loc, out)
                    }
                    other => {
                        self.err(Diagnostic::type_error(format!("unknown model method `{other}`"), segs[0].loc));
                        return Typed::plain(LExpr::lit(root.loc, Value::Null), VType::Unknown);
                    }
                }
            }
            _ => self.expr(root, out),
        };

        while idx < segs.len() {
            let (name, args) = seg_parts(segs[idx]);
            let loc = segs[idx].loc;
            // Extending a stored relation.
            if QUERY_METHODS.contains(&name) && cur.origin.is_some() && matches!(cur.ty, VType::Rows(_)) {
                let n = segs[idx..].iter().take_while(|s| QUERY_METHODS.contains(&seg_parts(s).0)).count();
                let origin = cur.origin.take().expect("checked");
                let base = match &cur.expr.kind {
                    LExprKind::Var { name } => Some((name.clone(), origin.key)),
                    _ => None,
                };
                let mut desc = origin.descriptor;
                desc.chain_prefix_of = None;
                cur = self.build_query(desc, base, &segs[idx..idx + n], cur.expr.loc, out);
                idx += n;
                continue;
            }
            cur = self.member(cur, name, args, loc, out);
            idx += 1;
        }
        cur
    }

    fn member(&mut self, cur: Typed, name: &str, args: Option<&[Arg]>, loc: Location, out: &mut Vec<LStmt>) -> Typed {
        let ir = self.ir;
        let recv_loc = cur.expr.loc;
        match cur.ty.clone() {
            VType::Record(m) | VType::Rows(m) => {
                let many = matches!(cur.ty, VType::Rows(_));
                let model = ir.model(&m).expect("typed model exists");
                if name == "save" && !many {
                    return self.save(cur, model, loc);
                }
                if args.is_none() {
                    if model.field(name).is_some() {
                        return Typed::plain(
                            LExpr {
                                loc: recv_loc,
                                kind: LExprKind::Field { recv: Box::new(cur.expr), column: name.into() },
                            },
                            VType::Scalar,
                        );
                    }
                    if let Some(assoc) = model.association(name) {
                        let ty = if many || assoc.kind == AssocKind::HasMany {
                            VType::Rows(assoc.target.clone())
                        } else {
                            VType::Record(assoc.target.clone())
                        };
                        return Typed::plain(
                            LExpr {
                                loc: recv_loc,
                                kind: LExprKind::Assoc {
                                    recv: Box::new(cur.expr),
                                    assoc: name.into(),
                                    model: assoc.target.clone(),
                                },
                            },
                            ty,
                        );
                    }
                    if many && matches!(name, "count" | "size" | "length" | "any") {
                        let e = LExpr { loc, kind: LExprKind::Utility { name: "len".into(), args: vec![cur.expr] } };
                        if name == "any" {
                            return Typed::plain(
                                LExpr {
                                    loc,
                                    kind: LExprKind::Binary {
                                        op: BinOp::Gt,
                                        lhs: Box::new(e),
                                        rhs: Box::new(LExpr::lit(loc, Value::Int(0))),
                                    },
                                },
                                VType::Scalar,
                            );
                        }
                        return Typed::plain(e, VType::Scalar);
                    }
                }
                self.err(Diagnostic::unresolved(format!("{m}.{name}"), loc));
                let _ = out;
                Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown)
            }
            VType::Scalar | VType::Unknown => {
                self.err(Diagnostic::type_error(format!("`{name}` is not a member of a scalar value"), loc));
                Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown)
            }
        }
    }

    fn save(&mut self, cur: Typed, model: &ModelDecl, loc: Location) -> Typed {
        let LExprKind::Var { name: var } = &cur.expr.kind else {
            self.err(Diagnostic::type_error("`save` needs a record variable", loc));
            return Typed::plain(LExpr::lit(loc, Value::Null), VType::Unknown);
        };
        let mut desc = QueryDescriptor::select(model);
        desc.kind = if self.new_objects.contains(var) { QueryKind::Insert } else { QueryKind::Update };
        desc.assignments = self.writes.get(var).map(|s| s.iter().cloned().collect()).unwrap_or_default();
        desc.projection.clear();
        let key = self.fresh_key();
        let q = QueryExpr { key, loc: cur.expr.loc, descriptor: desc, base: None, target_var: Some(var.clone()) };
        Typed::plain(LExpr { loc: cur.expr.loc, kind: LExprKind::Query { query: Box::new(q) } }, VType::Scalar)
    }

    /// `Model.create(col: expr, ...)` lowers to new + field writes + save.
    fn create(&mut self, model: &ModelDecl, args: &[Arg], loc: Location, out: &mut Vec<LStmt>) -> Typed {
        let var = self.temp("new", VarInfo { ty: VType::Record(model.name.clone()), origin: None });
        self.new_objects.insert(var.clone());
        out.push(LStmt {
            loc,
            kind: LStmtKind::Assign {
                var: var.clone(),
                value: LExpr { loc, kind: LExprKind::New { model: model.name.clone() } },
            },
        });
        for a in args {
            let Some(col) = &a.name else {
                self.err(Diagnostic::type_error("`create` takes named column arguments", a.value.loc));
                continue;
            };
            if col == "id" || model.field(col).is_none() {
                self.err(Diagnostic::unresolved(format!("{}.{col}", model.name), a.value.loc));
                continue;
            }
            let v = self.expr(&a.value, out);
            self.writes.entry(var.clone()).or_default().insert(col.clone());
            out.push(LStmt {
                loc: a.value.loc,
                kind: LStmtKind::FieldWrite {
                    var: var.clone(),
                    model: model.name.clone(),
                    column: col.clone(),
                    value: v.expr,
                },
            });
        }
        let rec =
            Typed::plain(LExpr { loc, kind: LExprKind::Var { name: var.clone() } }, VType::Record(model.name.clone()));
        let save = self.save(rec, model, loc);
        out.push(LStmt { loc, kind: LStmtKind::Eval { expr: save.expr } });
        Typed::plain(LExpr { loc, kind: LExprKind::Var { name: var } }, VType::Record(model.name.clone()))
    }

    fn build_query(
        &mut self,
        mut desc: QueryDescriptor,
        base: Option<(String, u32)>,
        segs: &[&Expr],
        loc: Location,
        out: &mut Vec<LStmt>,
    ) -> Typed {
        let ir = self.ir;
        let root = ir.model(&desc.root_model).expect("root model exists");
        let mut selected: Option<Vec<String>> = if desc.explicit_projection {
            Some(desc.projection.iter().filter(|c| c.relation == Relation::Root).map(|c| c.column.clone()).collect())
        } else {
            None
        };
        for seg in segs {
            let (name, args) = seg_parts(seg);
            let args = args.unwrap_or(&[]);
            if desc.aggregate.is_some() {
                self.err(Diagnostic::type_error(format!("`{name}` after a terminal query method"), seg.loc));
                break;
            }
            match name {
                "all" => {}
                "where" => {
                    for a in args {
                        if let Some(p) = self.predicate(root, a, out) {
                            desc.predicates.push(p);
                        }
                    }
                }
                "includes" => {
                    for a in args {
                        match &a.value.kind {
                            ExprKind::Ident { name } if root.association(name).is_some() => {
                                if !desc.eager_loads.contains(name) {
                                    desc.eager_loads.push(name.clone());
                                }
                            }
                            ExprKind::Ident { name } => {
                                self.err(Diagnostic::unresolved(format!("{}.{name}", root.name), a.value.loc))
                            }
                            _ => self.err(Diagnostic::type_error("`includes` takes association names", a.value.loc)),
                        }
                    }
                }
                "order" | "group" => {
                    let col = args.first().and_then(|a| self.column_ref(root, &a.value));
                    if args.len() != 1 || col.is_none() {
                        self.err(Diagnostic::type_error(format!("`{name}` takes one column"), seg.loc));
                    } else if name == "order" {
                        desc.order_by = col;
                    } else {
                        desc.group_by = col;
                    }
                }
                "select" => {
                    let mut cols = Vec::new();
                    for a in args {
                        match &a.value.kind {
                            ExprKind::Ident { name } if root.field(name).is_some() => cols.push(name.clone()),
                            _ => self
                                .err(Diagnostic::unresolved(format!("{}.{:?}", root.name, a.value.kind), a.value.loc)),
                        }
                    }
                    desc.explicit_projection = true;
                    selected = Some(cols);
                }
                "limit" | "offset" => {
                    if args.len() != 1 {
                        self.err(Diagnostic::type_error(format!("`{name}` takes one value"), seg.loc));
                        continue;
                    }
                    let v = ValueExpr::new(self.expr(&args[0].value, out).expr);
                    if name == "limit" {
                        desc.limit = Some(v);
                    } else {
                        desc.offset = Some(v);
                    }
                }
                "find" => {
                    if args.len() != 1 {
                        self.err(Diagnostic::type_error("`find` takes one id", seg.loc));
                        continue;
                    }
                    let v = ValueExpr::new(self.expr(&args[0].value, out).expr);
                    desc.predicates.push(Predicate {
                        column: ColumnRef::root(&root.name, "id"),
                        op: PredOp::Eq,
                        value: v,
                    });
                    desc.aggregate = Some(Aggregate::FindByPk);
                }
                "count" => desc.aggregate = Some(Aggregate::Count),
                "any" => desc.aggregate = Some(Aggregate::Any),
                _ => unreachable!("filtered by QUERY_METHODS"),
            }
        }
        for c in desc.predicates.iter().map(|p| &p.column).chain(desc.order_by.iter()).chain(desc.group_by.iter()) {
            if let Relation::Assoc(a) = &c.relation {
                if !desc.eager_loads.contains(a) {
                    self.err(Diagnostic::type_error(format!("association `{a}` must be included before use"), loc));
                }
            }
        }
        desc.compute_projection(ir, selected.as_deref());
        let key = self.fresh_key();
        let ty = match desc.aggregate {
            Some(Aggregate::Count) | Some(Aggregate::Any) => VType::Scalar,
            Some(Aggregate::FindByPk) => VType::Record(root.name.clone()),
            None => VType::Rows(root.name.clone()),
        };
        let origin = (ty == VType::Rows(root.name.clone())).then(|| Origin { key, descriptor: desc.clone() });
        let q = QueryExpr { key, loc, descriptor: desc, base, target_var: None };
        Typed { expr: LExpr { loc, kind: LExprKind::Query { query: Box::new(q) } }, ty, origin }
    }

    fn column_ref(&mut self, root: &ModelDecl, e: &Expr) -> Option<ColumnRef> {
        match &e.kind {
            ExprKind::Ident { name } if root.field(name).is_some() => Some(ColumnRef::root(&root.name, name)),
            ExprKind::Method { recv, name: col, args: None } => {
                let ExprKind::Ident { name: assoc } = &recv.kind else { return None };
                let a = root.association(assoc)?;
                let target = self.ir.model(&a.target)?;
                target.field(col).map(|_| ColumnRef::assoc(assoc, &target.name, col))
            }
            _ => None,
        }
    }

    fn predicate(&mut self, root: &ModelDecl, a: &Arg, out: &mut Vec<LStmt>) -> Option<Predicate> {
        if let Some(col) = &a.name {
            if root.field(col).is_none() {
                self.err(Diagnostic::unresolved(format!("{}.{col}", root.name), a.value.loc));
                return None;
            }
            let v = self.expr(&a.value, out);
            return Some(Predicate {
                column: ColumnRef::root(&root.name, col),
                op: PredOp::Eq,
                value: ValueExpr::new(v.expr),
            });
        }
        let ExprKind::Binary { op, lhs, rhs } = &a.value.kind else {
            self.err(Diagnostic::type_error("expected `column <op> value`", a.value.loc));
            return None;
        };
        let op = match op {
            BinOp::Eq => PredOp::Eq,
            BinOp::Ne => PredOp::Ne,
            BinOp::Lt => PredOp::Lt,
            BinOp::Gt => PredOp::Gt,
            BinOp::In => PredOp::In,
            other => {
                self.err(Diagnostic::type_error(
                    format!("unsupported predicate operator `{}`", other.symbol()),
                    a.value.loc,
                ));
                return None;
            }
        };
        let Some(column) = self.column_ref(root, lhs) else {
            self.err(Diagnostic::unresolved(format!("{}.column", root.name), lhs.loc));
            return None;
        };
        let v = self.expr(rhs, out);
        Some(Predicate { column, op, value: ValueExpr::new(v.expr) })
    }
}

fn seg_parts(e: &Expr) -> (&str, Option<&[Arg]>) {
    match &e.kind {
        ExprKind::Method { name, args, .. } => (name.as_str(), args.as_deref()),
        _ => ("", None),
    }
}

/// Visit a lowered expression tree (pre-order), descending into query slots.
pub fn walk_lexpr<'e>(e: &'e LExpr, f: &mut impl FnMut(&'e LExpr)) {
    f(e);
    match &e.kind {
        LExprKind::Utility { args, .. } => args.iter().for_each(|a| walk_lexpr(a, f)),
        LExprKind::Field { recv, .. } | LExprKind::Assoc { recv, .. } => walk_lexpr(recv, f),
        LExprKind::Query { query } => {
            for (_, v) in query.descriptor.slots() {
                walk_lexpr(&v.expr, f);
            }
        }
        LExprKind::Binary { lhs, rhs, .. } => {
            walk_lexpr(lhs, f);
            walk_lexpr(rhs, f);
        }
        LExprKind::Unary { operand, .. } => walk_lexpr(operand, f),
        LExprKind::List { items } => items.iter().for_each(|i| walk_lexpr(i, f)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lower(src: &str, c: &str, a: &str) -> Result<LoweredAction, Vec<Diagnostic>> {
        let ir = parse_syntax(src).unwrap();
        lower_action(&ir, &ActionId::new(c, a))
    }

    fn queries(stmts: &[LStmt]) -> Vec<QueryExpr> {
        let mut out = Vec::new();
        fn go(stmts: &[LStmt], out: &mut Vec<QueryExpr>) {
            for s in stmts {
                let mut exprs: Vec<&LExpr> = Vec::new();
                let mut bodies: Vec<&[LStmt]> = Vec::new();
                match &s.kind {
                    LStmtKind::Assign { value, .. }
                    | LStmtKind::FieldWrite { value, .. }
                    | LStmtKind::GlobalAssign { value, .. } => exprs.push(value),
                    LStmtKind::For { iter, body, .. } => {
                        exprs.push(iter);
                        bodies.push(body);
                    }
                    LStmtKind::If { cond, then_body, else_body } => {
                        exprs.push(cond);
                        bodies.push(then_body);
                        bodies.push(else_body);
                    }
                    LStmtKind::Render { args } => exprs.extend(args),
                    LStmtKind::Link { args, .. } | LStmtKind::Form { args, .. } => {
                        exprs.extend(args.iter().map(|a| &a.1))
                    }
                    LStmtKind::Eval { expr } => exprs.push(expr),
                    LStmtKind::NoOp { .. } => {}
                }
                for e in exprs {
                    walk_lexpr(e, &mut |x| {
                        if let LExprKind::Query { query } = &x.kind {
                            out.push((**query).clone());
                        }
                    });
                }
                for b in bodies {
                    go(b, out);
                }
            }
        }
        go(stmts, &mut out);
        out
    }

    const MODELS: &str = "model Todo { field state: string(20) field proj_id: int belongs_to proj: Proj }
                          model Proj { field name: string(40) }";

    #[test]
    fn chain_becomes_one_query() {
        let src = format!("{MODELS} controller T {{ action a() {{ let t = Todo.where(state == \"x\").includes(proj).order(state).limit(5) render(t) }} }}");
        let l = lower(&src, "T", "a").unwrap();
        let qs = queries(&l.body);
        assert_eq!(qs.len(), 1);
        let d = &qs[0].descriptor;
        assert_eq!(d.eager_loads, vec!["proj"]);
        assert_eq!(d.predicates.len(), 1);
        assert!(d.limit.is_some());
        // root columns + association columns
        assert_eq!(d.projection.len(), 3 + 2);
    }

    #[test]
    fn extension_records_base() {
        let src = format!("{MODELS} controller T {{ action a() {{ let t = Todo.where(state == \"x\") if t.any {{ render(t.count) }} }} }}");
        let l = lower(&src, "T", "a").unwrap();
        let qs = queries(&l.body);
        assert_eq!(qs.len(), 3);
        let base_key = qs[0].key;
        assert_eq!(qs[1].base, Some(("t".into(), base_key)));
        assert_eq!(qs[1].descriptor.aggregate, Some(Aggregate::Any));
        assert_eq!(qs[1].descriptor.predicates.len(), 1);
    }

    #[test]
    fn helper_locals_are_renamed() {
        let src = format!(
            "{MODELS} def load(s: string(20)) {{ let t = Todo.where(state == s) return t }}
             controller T {{ action a() {{ let t = load(\"a\") let u = load(\"b\") render(t, u) }} }}"
        );
        let l = lower(&src, "T", "a").unwrap();
        let vars: Vec<String> = l
            .body
            .iter()
            .filter_map(|s| match &s.kind {
                LStmtKind::Assign { var, .. } => Some(var.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(vars, vec!["s#1", "t#1", "t", "s#2", "t#2", "u"]);
    }

    #[test]
    fn recursion_is_cut_at_depth_one() {
        let src = "def f() { f() } controller T { action a() { f() } }";
        let l = lower(src, "T", "a").unwrap();
        let noops = l.body.iter().filter(|s| matches!(s.kind, LStmtKind::NoOp { .. })).count();
        assert_eq!(noops, 1);
    }

    #[test]
    fn create_lowers_to_writes_and_insert() {
        let src = format!("{MODELS} controller T {{ action c POST (s) {{ Todo.create(state: param(:s)) }} }}");
        let l = lower(&src, "T", "c").unwrap();
        let qs = queries(&l.body);
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].descriptor.kind, QueryKind::Insert);
        assert_eq!(qs[0].descriptor.assignments, vec!["state"]);
    }

    #[test]
    fn unknown_column_and_assoc_use_without_include() {
        let src = format!("{MODELS} controller T {{ action a() {{ render(Todo.where(nope == 1)) render(Todo.where(proj.name == 1)) }} }}");
        let errs = lower(&src, "T", "a").unwrap_err();
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn link_to_post_action_conflicts() {
        let src = "controller T { action a() { link_to T.b() } action b POST () { } }";
        let errs = lower(src, "T", "a").unwrap_err();
        assert!(matches!(errs[0].kind, DiagnosticKind::RouteConflict { .. }));
    }
}
