//! Concrete execution of lowered action bodies against a store. Loops run
//! over actual rows; relations that are only extended (never read) are not
//! sent to the engine.

use std::collections::{BTreeMap, HashMap};

use super::engine::{execute_select, execute_write, EngineError, ResultSet, Tuple, Views};
use super::log::{LoggedRow, QueryLogEntry};
use super::store::{TableStore, NOW};
use crate::afg::lower::{LExpr, LExprKind, LStmt, LStmtKind, LoweredAction, QueryExpr};
use crate::afg::*;
use crate::app_model::{ActionId, AppIR, AssocKind, BinOp, HttpMethod, UnOp};
use crate::rewrite::{plan_select, plan_statement, Bindings, RewriteError, SqlText};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterpError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Plan(#[from] RewriteError),
    #[error("query key {0} has no AFG node")]
    MissingNode(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rec {
    pub model: String,
    pub id: Option<i64>,
    pub values: BTreeMap<String, Value>,
    /// Eager-loaded associations.
    pub assocs: BTreeMap<String, SVal>,
}

/// A query whose slots have been evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub key: u32,
    pub descriptor: QueryDescriptor,
    pub bindings: Bindings,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SVal {
    Scalar(Value),
    Record(Rec),
    Rows(Vec<Rec>),
    /// A relation built but not yet sent.
    Relation(Box<BoundQuery>),
}

impl SVal {
    fn null() -> Self {
        SVal::Scalar(Value::Null)
    }
}

/// A link or form rendered on the page.
#[derive(Debug, Clone, PartialEq)]
pub struct Offer {
    pub via: NodeId,
    pub target: ActionId,
    pub method: HttpMethod,
    pub args: BTreeMap<String, Value>,
    pub fields: Vec<String>,
}

/// Where the current step came from, copied into each log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub trigger: Option<HttpMethod>,
    pub form_fields: Vec<String>,
}

pub struct Interp<'a> {
    pub ir: &'a AppIR,
    pub afg: &'a Afg,
    pub store: &'a mut TableStore,
    pub globals: &'a mut BTreeMap<String, Value>,
    pub log: &'a mut Vec<QueryLogEntry>,
    pub seq: &'a mut u64,
    pub info: StepInfo,
    pub params: BTreeMap<String, Value>,
    env: BTreeMap<String, SVal>,
    bound: BTreeMap<String, BoundQuery>,
    last_bound: Option<BoundQuery>,
    targets: HashMap<*const LStmt, NodeId>,
    pub offers: Vec<Offer>,
}

fn target_stmts<'l>(body: &'l [LStmt], out: &mut Vec<&'l LStmt>) {
    for s in body {
        match &s.kind {
            LStmtKind::Link { .. } | LStmtKind::Form { .. } => out.push(s),
            LStmtKind::For { body, .. } => target_stmts(body, out),
            LStmtKind::If { then_body, else_body, .. } => {
                target_stmts(then_body, out);
                target_stmts(else_body, out);
            }
            _ => {}
        }
    }
}

impl<'a> Interp<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ir: &'a AppIR,
        afg: &'a Afg,
        lowered: &'a LoweredAction,
        store: &'a mut TableStore,
        globals: &'a mut BTreeMap<String, Value>,
        log: &'a mut Vec<QueryLogEntry>,
        seq: &'a mut u64,
        info: StepInfo,
        params: BTreeMap<String, Value>,
    ) -> Self {
        // Link/Form nodes are numbered in statement order.
        let mut stmts = Vec::new();
        target_stmts(&lowered.body, &mut stmts);
        let nodes = afg.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Link | NodeKind::Form));
        let targets = stmts.into_iter().zip(nodes).map(|(s, n)| (s as *const LStmt, n.id)).collect();
        Interp {
            ir,
            afg,
            store,
            globals,
            log,
            seq,
            info,
            params,
            env: BTreeMap::new(),
            bound: BTreeMap::new(),
            last_bound: None,
            targets,
            offers: Vec::new(),
        }
    }

    pub fn run(&mut self, body: &[LStmt]) -> Result<(), InterpError> {
        for s in body {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &LStmt) -> Result<(), InterpError> {
        match &s.kind {
            LStmtKind::Assign { var, value } => {
                self.last_bound = None;
                let v = self.eval(value)?;
                match (&value.kind, self.last_bound.take()) {
                    (LExprKind::Query { .. }, Some(b)) => {
                        self.bound.insert(var.clone(), b);
                    }
                    _ => {
                        self.bound.remove(var);
                    }
                }
                self.env.insert(var.clone(), v);
            }
            LStmtKind::FieldWrite { var, model, column, value } => {
                let v = self.eval(value)?;
                let v = self.column_value(v)?;
                let entry = self.env.entry(var.clone()).or_insert_with(|| {
                    SVal::Record(Rec {
                        model: model.clone(),
                        id: None,
                        values: BTreeMap::new(),
                        assocs: BTreeMap::new(),
                    })
                });
                if let SVal::Record(r) = entry {
                    r.values.insert(column.clone(), v);
                }
            }
            LStmtKind::GlobalAssign { name, value } => {
                let v = self.eval(value)?;
                let v = self.scalar_value(v)?;
                self.globals.insert(name.clone(), v);
            }
            LStmtKind::For { var, iter, body } => {
                let items = match self.eval(iter)? {
                    SVal::Relation(b) => self.materialize(&b)?,
                    other => other,
                };
                let elems: Vec<SVal> = match items {
                    SVal::Rows(rs) => rs.into_iter().map(SVal::Record).collect(),
                    SVal::Scalar(Value::List(vs)) => vs.into_iter().map(SVal::Scalar).collect(),
                    SVal::Record(r) => vec![SVal::Record(r)],
                    _ => Vec::new(),
                };
                for e in elems {
                    self.env.insert(var.clone(), e);
                    self.bound.remove(var);
                    self.run(body)?;
                }
            }
            LStmtKind::If { cond, then_body, else_body } => {
                let c = self.eval(cond)?;
                if self.truthy(c)? {
                    self.run(then_body)?;
                } else {
                    self.run(else_body)?;
                }
            }
            LStmtKind::Render { args } => {
                for a in args {
                    self.eval(a)?;
                }
            }
            LStmtKind::Link { target, args } | LStmtKind::Form { target, args, .. } => {
                let fields = match &s.kind {
                    LStmtKind::Form { fields, .. } => fields.clone(),
                    _ => Vec::new(),
                };
                let mut vals = BTreeMap::new();
                for (n, e) in args {
                    let v = self.eval(e)?;
                    vals.insert(n.clone(), self.scalar_value(v)?);
                }
                if let Some(via) = self.targets.get(&(s as *const LStmt)) {
                    let method = match &self.afg.node(*via).payload {
                        Payload::Target { method, .. } => *method,
                        _ => HttpMethod::Get,
                    };
                    self.offers.push(Offer { via: *via, target: target.clone(), method, args: vals, fields });
                }
            }
            LStmtKind::Eval { expr } => {
                self.eval(expr)?;
            }
            LStmtKind::NoOp { .. } => {}
        }
        Ok(())
    }

    fn truthy(&mut self, v: SVal) -> Result<bool, InterpError> {
        Ok(match v {
            SVal::Scalar(v) => v.truthy(),
            SVal::Record(_) => true,
            SVal::Rows(rs) => !rs.is_empty(),
            SVal::Relation(b) => self.truthy_rel(&b)?,
        })
    }

    fn truthy_rel(&mut self, b: &BoundQuery) -> Result<bool, InterpError> {
        let m = self.materialize(b)?;
        self.truthy(m)
    }

    /// Value stored into a column. A query result yields its first row's
    /// single selected column (or id), like a scalar subquery.
    fn column_value(&mut self, v: SVal) -> Result<Value, InterpError> {
        let v = match v {
            SVal::Relation(b) => self.materialize(&b)?,
            other => other,
        };
        Ok(match v {
            SVal::Rows(rs) => match rs.first() {
                None => Value::Null,
                Some(r) => {
                    let mut cols = r.values.iter().filter(|(k, _)| k.as_str() != "id");
                    match (cols.next(), cols.next()) {
                        (Some((_, v)), None) => v.clone(),
                        _ => r.id.map(Value::Int).unwrap_or(Value::Null),
                    }
                }
            },
            SVal::Scalar(Value::List(l)) => l.into_iter().next().unwrap_or(Value::Null),
            other => self.scalar_value(other)?,
        })
    }

    /// Scalar view of a value for SQL bindings and arithmetic.
    fn scalar_value(&mut self, v: SVal) -> Result<Value, InterpError> {
        Ok(match v {
            SVal::Scalar(v) => v,
            SVal::Record(r) => r.id.map(Value::Int).unwrap_or(Value::Null),
            SVal::Rows(rs) => Value::List(rs.iter().map(|r| r.id.map(Value::Int).unwrap_or(Value::Null)).collect()),
            SVal::Relation(b) => {
                let m = self.materialize(&b)?;
                self.scalar_value(m)?
            }
        })
    }

    fn eval(&mut self, e: &LExpr) -> Result<SVal, InterpError> {
        Ok(match &e.kind {
            LExprKind::Lit { value } => SVal::Scalar(value.clone()),
            LExprKind::Var { name } => self.env.get(name).cloned().unwrap_or_else(SVal::null),
            LExprKind::Global { name } => SVal::Scalar(self.globals.get(name).cloned().unwrap_or(Value::Null)),
            LExprKind::Param { name } => SVal::Scalar(self.params.get(name).cloned().unwrap_or(Value::Null)),
            LExprKind::Utility { name, args } => {
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.eval(a)?);
                }
                self.utility(name, vals)?
            }
            LExprKind::Field { recv, column } => match self.eval(recv)? {
                SVal::Record(r) => SVal::Scalar(r.values.get(column).cloned().unwrap_or(Value::Null)),
                SVal::Rows(rs) => SVal::Scalar(Value::List(
                    rs.iter().map(|r| r.values.get(column).cloned().unwrap_or(Value::Null)).collect(),
                )),
                SVal::Relation(b) => match self.materialize(&b)? {
                    SVal::Rows(rs) => SVal::Scalar(Value::List(
                        rs.iter().map(|r| r.values.get(column).cloned().unwrap_or(Value::Null)).collect(),
                    )),
                    _ => SVal::null(),
                },
                SVal::Scalar(_) => SVal::null(),
            },
            LExprKind::Assoc { recv, assoc, .. } => match self.eval(recv)? {
                SVal::Record(r) => self.assoc_of(&r, assoc),
                SVal::Rows(rs) => {
                    let mut out = Vec::new();
                    for r in &rs {
                        match self.assoc_of(r, assoc) {
                            SVal::Record(x) => out.push(x),
                            SVal::Rows(xs) => out.extend(xs),
                            _ => {}
                        }
                    }
                    SVal::Rows(out)
                }
                _ => SVal::null(),
            },
            LExprKind::Query { query } => self.query(query)?,
            LExprKind::New { model } => {
                let mut values = BTreeMap::new();
                if let Some(m) = self.ir.model(model) {
                    for c in m.column_names() {
                        values.insert(c.to_string(), Value::Null);
                    }
                }
                SVal::Record(Rec { model: model.clone(), id: None, values, assocs: BTreeMap::new() })
            }
            LExprKind::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs)?;
                if matches!(op, BinOp::And | BinOp::Or) {
                    let lt = self.truthy(l)?;
                    if (*op == BinOp::And) != lt {
                        return Ok(SVal::Scalar(Value::Bool(lt)));
                    }
                    let r = self.eval(rhs)?;
                    return Ok(SVal::Scalar(Value::Bool(self.truthy(r)?)));
                }
                let l = self.scalar_value(l)?;
                let r = self.eval(rhs)?;
                let r = self.scalar_value(r)?;
                SVal::Scalar(binary(*op, &l, &r))
            }
            LExprKind::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match op {
                    UnOp::Not => SVal::Scalar(Value::Bool(!self.truthy(v)?)),
                    UnOp::Neg => {
                        let v = self.scalar_value(v)?;
                        SVal::Scalar(binary(BinOp::Sub, &Value::Int(0), &v))
                    }
                }
            }
            LExprKind::List { items } => {
                let mut out = Vec::new();
                for i in items {
                    let v = self.eval(i)?;
                    out.push(self.scalar_value(v)?);
                }
                SVal::Scalar(Value::List(out))
            }
        })
    }

    fn utility(&mut self, name: &str, args: Vec<SVal>) -> Result<SVal, InterpError> {
        let mut vals = Vec::new();
        let mut lens = Vec::new();
        for a in args {
            let a = match a {
                SVal::Relation(b) => self.materialize(&b)?,
                other => other,
            };
            lens.push(match &a {
                SVal::Rows(rs) => rs.len() as i64,
                SVal::Scalar(Value::List(l)) => l.len() as i64,
                SVal::Scalar(Value::Str(s)) => s.chars().count() as i64,
                SVal::Scalar(Value::Null) => 0,
                _ => 1,
            });
            vals.push(self.scalar_value(a)?);
        }
        Ok(SVal::Scalar(match name {
            "now" => Value::Int(NOW),
            "today" => Value::Int(NOW - NOW.rem_euclid(86_400)),
            "len" => Value::Int(lens.first().copied().unwrap_or(0)),
            "concat" => {
                Value::Str(vals.iter().map(|v| if v.is_null() { String::new() } else { v.to_string() }).collect())
            }
            "lower" => match vals.first() {
                Some(Value::Str(s)) => Value::Str(s.to_lowercase()),
                other => other.cloned().unwrap_or(Value::Null),
            },
            "upper" => match vals.first() {
                Some(Value::Str(s)) => Value::Str(s.to_uppercase()),
                other => other.cloned().unwrap_or(Value::Null),
            },
            "abs" => match vals.first() {
                Some(Value::Int(i)) => Value::Int(i.wrapping_abs()),
                Some(Value::Float(f)) => Value::Float(f.abs()),
                other => other.cloned().unwrap_or(Value::Null),
            },
            _ => Value::Null,
        }))
    }

    /// Association of a record: eager-loaded data if present, otherwise a
    /// direct (unlogged) lookup.
    fn assoc_of(&self, r: &Rec, assoc: &str) -> SVal {
        if let Some(v) = r.assocs.get(assoc) {
            return v.clone();
        }
        let Some(m) = self.ir.model(&r.model) else { return SVal::null() };
        let Some(a) = m.association(assoc) else { return SVal::null() };
        let Some(t) = self.ir.model(&a.target) else { return SVal::null() };
        let Some(table) = self.store.table(&t.table) else { return SVal::null() };
        let rec = |row: &super::store::Row| Rec {
            model: t.name.clone(),
            id: Some(row.id),
            values: row.values.clone(),
            assocs: BTreeMap::new(),
        };
        match a.kind {
            AssocKind::BelongsTo => {
                let fk = r.values.get(&a.foreign_key).and_then(Value::as_i64);
                match fk.and_then(|id| table.get(id)) {
                    Some(row) => SVal::Record(rec(row)),
                    None => SVal::null(),
                }
            }
            AssocKind::HasOne | AssocKind::HasMany => {
                let Some(id) = r.id else { return SVal::Rows(Vec::new()) };
                let rows: Vec<Rec> = table
                    .rows
                    .iter()
                    .filter(|row| row.values.get(&a.foreign_key).is_some_and(|v| v.sql_eq(&Value::Int(id))))
                    .map(rec)
                    .collect();
                if a.kind == AssocKind::HasOne {
                    rows.into_iter().next().map(SVal::Record).unwrap_or_else(SVal::null)
                } else {
                    SVal::Rows(rows)
                }
            }
        }
    }

    fn bind_slots(&mut self, q: &QueryExpr) -> Result<Bindings, InterpError> {
        let base = q.base.as_ref().and_then(|(var, key)| self.bound.get(var).filter(|b| b.key == *key).cloned());
        let d = &q.descriptor;
        let mut b = Bindings::default();
        let inherited = |slot: Slot| -> Option<Value> {
            let base = base.as_ref()?;
            let same = match slot {
                Slot::Pred(i) => i < base.descriptor.predicates.len(),
                Slot::Limit => d.limit.is_some() && d.limit == base.descriptor.limit,
                Slot::Offset => d.offset.is_some() && d.offset == base.descriptor.offset,
            };
            if same {
                base.bindings.slots.get(&slot).cloned()
            } else {
                None
            }
        };
        let slots: Vec<(Slot, LExpr)> = d.slots().into_iter().map(|(s, v)| (s, v.expr.clone())).collect();
        for (slot, expr) in slots {
            let v = match inherited(slot) {
                Some(v) => v,
                None => {
                    let sv = self.eval(&expr)?;
                    self.scalar_value(sv)?
                }
            };
            b.slots.insert(slot, v);
        }
        Ok(b)
    }

    fn query(&mut self, q: &QueryExpr) -> Result<SVal, InterpError> {
        let node = self.afg.node_for_key(q.key).ok_or(InterpError::MissingNode(q.key))?;
        let deferred = matches!(node.payload, Payload::Query { deferred: true, .. });
        let d = &q.descriptor;
        match d.kind {
            QueryKind::Select => {
                let b = self.bind_slots(q)?;
                let bq = BoundQuery { key: q.key, descriptor: d.clone(), bindings: b };
                self.last_bound = Some(bq.clone());
                if deferred && d.is_relation() {
                    return Ok(SVal::Relation(Box::new(bq)));
                }
                self.materialize(&bq)
            }
            QueryKind::Insert | QueryKind::Update => {
                let var = q.target_var.clone().unwrap_or_default();
                let Some(SVal::Record(rec)) = self.env.get(&var).cloned() else { return Ok(SVal::null()) };
                let mut b = Bindings::default();
                for c in &d.assignments {
                    b.assignments.insert(c.clone(), rec.values.get(c).cloned().unwrap_or(Value::Null));
                }
                b.row_id = Some(rec.id.map(Value::Int).unwrap_or(Value::Null));
                let stmt = plan_statement(d, self.ir, Some(&b))?;
                let w = execute_write(self.store, &stmt)?;
                let table = w.table.clone();
                let written = w.ids.len();
                let rows = w
                    .ids
                    .iter()
                    .map(|id| LoggedRow { table: table.clone(), id: *id, columns: d.assignments.clone() })
                    .collect();
                self.push_entry(
                    node.id,
                    node.location,
                    d.kind,
                    SqlText::from(&stmt),
                    (rows, written),
                    None,
                    String::new(),
                );
                if d.kind == QueryKind::Insert {
                    if let (Some(id), Some(SVal::Record(r))) = (w.ids.first(), self.env.get_mut(&var)) {
                        r.id = Some(*id);
                        r.values.insert("id".into(), Value::Int(*id));
                    }
                }
                Ok(SVal::Scalar(Value::Bool(!w.ids.is_empty())))
            }
        }
    }

    /// Send a bound select to the engine, log it and convert the result.
    fn materialize(&mut self, bq: &BoundQuery) -> Result<SVal, InterpError> {
        let node = self.afg.node_for_key(bq.key).ok_or(InterpError::MissingNode(bq.key))?;
        let (id, loc) = (node.id, node.location);
        let d = &bq.descriptor;
        let plan = plan_select(d, self.ir, Some(&bq.bindings))?;
        let rs = execute_select(self.store, &Views::new(), &plan)?;
        let rows = rs
            .identities()
            .into_iter()
            .map(|(ident, cols)| LoggedRow { table: ident.table, id: ident.id, columns: cols.into_iter().collect() })
            .collect();
        let digest = digest(&rs);
        let size = if rs.count.is_some() { 1 } else { rs.rows.len() };
        self.push_entry(id, loc, QueryKind::Select, SqlText { text: plan.to_string() }, (rows, size), rs.count, digest);
        Ok(match d.aggregate {
            Some(Aggregate::Count) => SVal::Scalar(Value::Int(rs.count.unwrap_or(0))),
            Some(Aggregate::Any) => SVal::Scalar(Value::Bool(rs.count.unwrap_or(0) > 0)),
            Some(Aggregate::FindByPk) => {
                records(self.ir, d, &rs).into_iter().next().map(SVal::Record).unwrap_or_else(SVal::null)
            }
            None => SVal::Rows(records(self.ir, d, &rs)),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn push_entry(
        &mut self,
        node: NodeId,
        location: crate::app_model::Location,
        kind: QueryKind,
        sql: SqlText,
        (rows, result_rows): (Vec<LoggedRow>, usize),
        count: Option<i64>,
        digest: String,
    ) {
        *self.seq += 1;
        self.log.push(QueryLogEntry {
            seq: *self.seq,
            step: self.info.step,
            action: self.afg.action.clone(),
            trigger: self.info.trigger,
            form_fields: self.info.form_fields.clone(),
            node,
            location,
            kind,
            sql: sql.text,
            rows,
            count,
            result_rows,
            digest,
        });
    }
}

/// FNV-1a over the canonical JSON of a result.
fn digest(rs: &ResultSet) -> String {
    let text = serde_json::to_string(rs).expect("result serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn rec_of(model: &str, t: &Tuple) -> Rec {
    Rec {
        model: model.to_string(),
        id: t.origin.first().map(|o| o.id),
        values: t.values.clone(),
        assocs: BTreeMap::new(),
    }
}

/// Result rows grouped into root records with their eager-loaded
/// associations attached.
fn records(ir: &AppIR, d: &QueryDescriptor, rs: &ResultSet) -> Vec<Rec> {
    let root = ir.model(&d.root_model);
    let mut out: Vec<Rec> = Vec::new();
    let mut index: BTreeMap<i64, usize> = BTreeMap::new();
    for row in &rs.rows {
        let Some(first) = row.first() else { continue };
        let rid = first.origin.first().map(|o| o.id).unwrap_or_default();
        let at = *index.entry(rid).or_insert_with(|| {
            out.push(rec_of(&d.root_model, first));
            out.len() - 1
        });
        for (i, a) in d.eager_loads.iter().enumerate() {
            let Some(t) = row.get(i + 1) else { continue };
            let Some(assoc) = root.and_then(|m| m.association(a)) else { continue };
            let child = rec_of(&assoc.target, t);
            let slot = &mut out[at].assocs;
            match assoc.kind {
                AssocKind::BelongsTo | AssocKind::HasOne => {
                    slot.entry(a.clone()).or_insert(SVal::Record(child));
                }
                AssocKind::HasMany => {
                    let e = slot.entry(a.clone()).or_insert_with(|| SVal::Rows(Vec::new()));
                    if let SVal::Rows(v) = e {
                        if !v.iter().any(|r| r.id == child.id) {
                            v.push(child);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Arithmetic and comparisons on scalar values. Type mismatches give NULL
/// (arithmetic) or false (comparisons).
pub fn binary(op: BinOp, l: &Value, r: &Value) -> Value {
    use std::cmp::Ordering::*;
    let num = |f: fn(i64, i64) -> Option<i64>, g: fn(f64, f64) -> f64| -> Value {
        match (l, r) {
            (Value::Int(a), Value::Int(b)) => f(*a, *b).map(Value::Int).unwrap_or(Value::Null),
            _ => match (l.as_f64(), r.as_f64()) {
                (Some(a), Some(b)) => Value::Float(g(a, b)),
                _ => Value::Null,
            },
        }
    };
    match op {
        BinOp::Add => match (l, r) {
            (Value::Str(a), Value::Str(b)) => Value::Str(format!("{a}{b}")),
            _ => num(i64::checked_add, |a, b| a + b),
        },
        BinOp::Sub => num(i64::checked_sub, |a, b| a - b),
        BinOp::Mul => num(i64::checked_mul, |a, b| a * b),
        BinOp::Div => num(|a, b| a.checked_div(b), |a, b| a / b),
        BinOp::Eq => Value::Bool(l.sql_eq(r)),
        BinOp::Ne => Value::Bool(matches!(l.sql_cmp(r), Some(Less | Greater))),
        BinOp::Lt => Value::Bool(l.sql_cmp(r) == Some(Less)),
        BinOp::Gt => Value::Bool(l.sql_cmp(r) == Some(Greater)),
        BinOp::Le => Value::Bool(matches!(l.sql_cmp(r), Some(Less | Equal))),
        BinOp::Ge => Value::Bool(matches!(l.sql_cmp(r), Some(Greater | Equal))),
        BinOp::In => Value::Bool(!l.is_null() && l.sql_in(r)),
        BinOp::And => Value::Bool(l.truthy() && r.truthy()),
        BinOp::Or => Value::Bool(l.truthy() || r.truthy()),
    }
}
