//! Hash-join execution of [`SelectPlan`]s and writes over a [`TableStore`].
//!
//! Evaluation order: scan, joins, filters, GROUP BY (first row per key),
//! stable sort by the ORDER BY column then the root row id, OFFSET, LIMIT,
//! and finally COUNT or projection.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::store::TableStore;
use crate::afg::PredOp;
use crate::rewrite::{Col, Cond, Operand, Output, SelectPlan, Source, Statement};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unbound parameter `{label}`")]
    UnboundParameter { label: String },
    #[error("unknown column `{alias}.{column}`")]
    UnknownColumn { alias: String, column: String },
    #[error("unknown table `{name}`")]
    UnknownTable { name: String },
    #[error("unknown view `{name}`")]
    UnknownView { name: String },
    #[error("unknown alias `{alias}`")]
    UnknownAlias { alias: String },
    #[error("row {id} of `{table}` does not exist")]
    MissingRow { table: String, id: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowIdent {
    pub table: String,
    pub id: i64,
}

/// One source row bound to a plan alias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuple {
    pub alias: String,
    /// Column values, restricted to the projection in the result.
    pub values: BTreeMap<String, Value>,
    /// Stored rows this tuple came from: one for a table, several for a view.
    pub origin: Vec<RowIdent>,
}

impl Tuple {
    pub fn get(&self, column: &str) -> Option<&Value> {
        self.values.get(column)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    /// One tuple per alias, in join order.
    pub rows: Vec<Vec<Tuple>>,
    /// Set for COUNT queries.
    pub count: Option<i64>,
}

impl ResultSet {
    /// Every stored row touched, with the columns retrieved from it.
    pub fn identities(&self) -> BTreeMap<RowIdent, BTreeSet<String>> {
        let mut out: BTreeMap<RowIdent, BTreeSet<String>> = BTreeMap::new();
        for row in &self.rows {
            for t in row {
                if let [single] = t.origin.as_slice() {
                    out.entry(single.clone()).or_default().extend(t.values.keys().cloned());
                } else {
                    for o in &t.origin {
                        out.entry(o.clone()).or_default();
                    }
                }
            }
        }
        out
    }

    /// Multiset of per-row origin sets, for comparisons that ignore order
    /// and aliasing.
    pub fn origin_multiset(&self) -> Vec<Vec<RowIdent>> {
        let mut rows: Vec<Vec<RowIdent>> = self
            .rows
            .iter()
            .map(|r| {
                let mut ids: Vec<RowIdent> = r.iter().flat_map(|t| t.origin.iter().cloned()).collect();
                ids.sort();
                ids
            })
            .collect();
        rows.sort();
        rows
    }
}

/// View definitions by name.
pub type Views = BTreeMap<String, SelectPlan>;

/// Rows written by a statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteResult {
    pub table: String,
    pub ids: Vec<i64>,
}

fn bound(o: &Operand) -> Result<Value, EngineError> {
    match o {
        Operand::Value { value } => Ok(value.clone()),
        Operand::Param { label } => Err(EngineError::UnboundParameter { label: label.clone() }),
        Operand::Col { col } => Err(EngineError::UnboundParameter { label: format!("{}.{}", col.alias, col.column) }),
    }
}

/// Columns and tuples of one FROM/JOIN source.
fn source_tuples(
    store: &TableStore,
    views: &Views,
    source: &Source,
    alias: &str,
) -> Result<(Vec<String>, Vec<Tuple>), EngineError> {
    match source {
        Source::Table(name) => {
            let t = store.table(name).ok_or_else(|| EngineError::UnknownTable { name: name.clone() })?;
            let tuples = t
                .rows
                .iter()
                .map(|r| Tuple {
                    alias: alias.to_string(),
                    values: r.values.clone(),
                    origin: vec![RowIdent { table: name.clone(), id: r.id }],
                })
                .collect();
            Ok((t.columns.clone(), tuples))
        }
        Source::View(name) => {
            let plan = views.get(name).ok_or_else(|| EngineError::UnknownView { name: name.clone() })?;
            let Output::Columns(cols) = &plan.output else {
                return Err(EngineError::UnknownView { name: name.clone() });
            };
            let names: Vec<String> =
                cols.iter().map(|c| c.name.clone().unwrap_or_else(|| c.col.column.clone())).collect();
            let rs = execute_select(store, views, plan)?;
            let tuples = rs
                .rows
                .iter()
                .map(|row| {
                    let mut values = BTreeMap::new();
                    for (c, n) in cols.iter().zip(&names) {
                        let v = row.iter().find(|t| t.alias == c.col.alias).and_then(|t| t.get(&c.col.column));
                        values.insert(n.clone(), v.cloned().unwrap_or(Value::Null));
                    }
                    Tuple {
                        alias: alias.to_string(),
                        values,
                        origin: row.iter().flat_map(|t| t.origin.iter().cloned()).collect(),
                    }
                })
                .collect();
            Ok((names, tuples))
        }
    }
}

struct Schema {
    aliases: Vec<(String, Vec<String>)>,
}

impl Schema {
    fn position(&self, c: &Col) -> Result<usize, EngineError> {
        let i = self
            .aliases
            .iter()
            .position(|(a, _)| a == &c.alias)
            .ok_or_else(|| EngineError::UnknownAlias { alias: c.alias.clone() })?;
        if !self.aliases[i].1.iter().any(|x| x == &c.column) {
            return Err(EngineError::UnknownColumn { alias: c.alias.clone(), column: c.column.clone() });
        }
        Ok(i)
    }
}

fn col_value<'r>(row: &'r [Tuple], pos: usize, c: &Col) -> &'r Value {
    row[pos].get(&c.column).unwrap_or(&Value::Null)
}

/// A condition with operands resolved against the schema.
enum Check {
    Const { pos: usize, col: Col, op: PredOp, rhs: Value },
    Cols { pos: usize, col: Col, op: PredOp, rpos: usize, rcol: Col },
}

impl Check {
    fn new(schema: &Schema, c: &Cond) -> Result<Check, EngineError> {
        let pos = schema.position(&c.lhs)?;
        Ok(match &c.rhs {
            Operand::Col { col } => {
                Check::Cols { pos, col: c.lhs.clone(), op: c.op, rpos: schema.position(col)?, rcol: col.clone() }
            }
            other => Check::Const { pos, col: c.lhs.clone(), op: c.op, rhs: bound(other)? },
        })
    }

    fn holds(&self, row: &[Tuple]) -> bool {
        match self {
            Check::Const { pos, col, op, rhs } => op.eval(col_value(row, *pos, col), rhs),
            Check::Cols { pos, col, op, rpos, rcol } => op.eval(col_value(row, *pos, col), col_value(row, *rpos, rcol)),
        }
    }
}

/// Hashable stand-in for a value under SQL equality; NULL never matches.
fn hash_key(v: &Value) -> Option<Value> {
    match v {
        Value::Null => None,
        Value::Bool(b) => Some(Value::Int(*b as i64)),
        Value::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Some(Value::Int(*f as i64)),
        other => Some(other.clone()),
    }
}

pub fn execute_select(store: &TableStore, views: &Views, plan: &SelectPlan) -> Result<ResultSet, EngineError> {
    let (cols, root) = source_tuples(store, views, &plan.from.source, &plan.from.alias)?;
    let mut schema = Schema { aliases: vec![(plan.from.alias.clone(), cols)] };
    let mut rows: Vec<Vec<Tuple>> = root.into_iter().map(|t| vec![t]).collect();

    for j in &plan.joins {
        let (cols, inner) = source_tuples(store, views, &j.table.source, &j.table.alias)?;
        schema.aliases.push((j.table.alias.clone(), cols));
        let me = schema.aliases.len() - 1;
        let checks: Vec<Check> = j.on.iter().map(|c| Check::new(&schema, c)).collect::<Result<_, _>>()?;
        // An equality between the new alias and an earlier one drives a hash join.
        let driver = checks
            .iter()
            .position(|c| matches!(c, Check::Cols { pos, op: PredOp::Eq, rpos, .. } if (*pos == me) != (*rpos == me)));
        let mut next = Vec::new();
        match driver.map(|i| &checks[i]) {
            Some(Check::Cols { pos, col, rpos, rcol, .. }) => {
                let (inner_col, outer_pos, outer_col) = if *pos == me { (col, *rpos, rcol) } else { (rcol, *pos, col) };
                let mut index: HashMap<Value, Vec<usize>> = HashMap::new();
                for (i, t) in inner.iter().enumerate() {
                    if let Some(k) = t.get(&inner_col.column).and_then(hash_key) {
                        index.entry(k).or_default().push(i);
                    }
                }
                for row in rows {
                    let Some(k) = hash_key(col_value(&row, outer_pos, outer_col)) else { continue };
                    for &i in index.get(&k).map(Vec::as_slice).unwrap_or(&[]) {
                        let mut r = row.clone();
                        r.push(inner[i].clone());
                        if checks.iter().all(|c| c.holds(&r)) {
                            next.push(r);
                        }
                    }
                }
            }
            _ => {
                for row in rows {
                    for t in &inner {
                        let mut r = row.clone();
                        r.push(t.clone());
                        if checks.iter().all(|c| c.holds(&r)) {
                            next.push(r);
                        }
                    }
                }
            }
        }
        rows = next;
    }

    let filters: Vec<Check> = plan.filters.iter().map(|c| Check::new(&schema, c)).collect::<Result<_, _>>()?;
    rows.retain(|r| filters.iter().all(|c| c.holds(r)));

    if let Some(g) = &plan.group_by {
        let pos = schema.position(g)?;
        let mut seen = BTreeSet::new();
        rows.retain(|r| seen.insert(col_value(r, pos, g).clone()));
    }
    let root_id = |r: &Vec<Tuple>| r[0].origin.first().map(|o| o.id).unwrap_or_default();
    match &plan.order_by {
        Some(o) => {
            let pos = schema.position(o)?;
            rows.sort_by(|a, b| col_value(a, pos, o).cmp(col_value(b, pos, o)).then(root_id(a).cmp(&root_id(b))));
        }
        None => rows.sort_by_key(root_id),
    }
    if let Some(off) = &plan.offset {
        let n = bound(off)?.as_i64().unwrap_or(0).max(0) as usize;
        rows.drain(..n.min(rows.len()));
    }
    if let Some(l) = &plan.limit {
        let n = bound(l)?.as_i64().unwrap_or(0).max(0) as usize;
        rows.truncate(n);
    }

    match &plan.output {
        Output::Count => Ok(ResultSet { rows: Vec::new(), count: Some(rows.len() as i64) }),
        Output::All => Ok(ResultSet { rows, count: None }),
        Output::Columns(cols) => {
            for c in cols {
                schema.position(&c.col)?;
            }
            for row in &mut rows {
                for t in row.iter_mut() {
                    let keep: BTreeSet<&str> =
                        cols.iter().filter(|c| c.col.alias == t.alias).map(|c| c.col.column.as_str()).collect();
                    t.values.retain(|k, _| keep.contains(k.as_str()));
                }
            }
            Ok(ResultSet { rows, count: None })
        }
    }
}

/// Apply an insert or update.
pub fn execute_write(store: &mut TableStore, stmt: &Statement) -> Result<WriteResult, EngineError> {
    match stmt {
        Statement::Insert { table, values } => {
            let t = store.tables.get_mut(table).ok_or_else(|| EngineError::UnknownTable { name: table.clone() })?;
            let mut row = BTreeMap::new();
            for (c, v) in values {
                if !t.columns.contains(c) {
                    return Err(EngineError::UnknownColumn { alias: table.clone(), column: c.clone() });
                }
                row.insert(c.clone(), bound(v)?);
            }
            let id = t.insert(row);
            Ok(WriteResult { table: table.clone(), ids: vec![id] })
        }
        Statement::Update { table, id, values } => {
            let t = store.tables.get_mut(table).ok_or_else(|| EngineError::UnknownTable { name: table.clone() })?;
            let idv = bound(id)?;
            let Some(id) = idv.as_i64() else {
                return Ok(WriteResult { table: table.clone(), ids: Vec::new() });
            };
            let mut vals = Vec::new();
            for (c, v) in values {
                if !t.columns.contains(c) {
                    return Err(EngineError::UnknownColumn { alias: table.clone(), column: c.clone() });
                }
                vals.push((c.clone(), bound(v)?));
            }
            match t.get_mut(id) {
                Some(row) => {
                    for (c, v) in vals {
                        row.values.insert(c, v);
                    }
                    Ok(WriteResult { table: table.clone(), ids: vec![id] })
                }
                None => Ok(WriteResult { table: table.clone(), ids: Vec::new() }),
            }
        }
        Statement::Select(_) | Statement::CreateView { .. } => {
            Ok(WriteResult { table: String::new(), ids: Vec::new() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::parse_app;
    use crate::rewrite::{Join, TableRef};
    use crate::sim::store::generate_data_with;

    fn store() -> TableStore {
        let ir = parse_app("model P { field n: int } model C { field p_id: int belongs_to p: P key p_id }").unwrap();
        generate_data_with(&ir, 5, 20, &Default::default())
    }

    #[test]
    fn count_over_empty_table() {
        let ir = parse_app("model P { field n: int }").unwrap();
        let s = TableStore::empty(&ir);
        let mut p = SelectPlan::scan(Source::Table("ps".into()), "t1");
        p.output = Output::Count;
        assert_eq!(execute_select(&s, &Views::new(), &p).unwrap().count, Some(0));
    }

    #[test]
    fn join_without_matches_is_empty() {
        let mut s = store();
        for r in &mut s.tables.get_mut("cs").unwrap().rows {
            r.values.insert("p_id".into(), Value::Int(999));
        }
        let mut p = SelectPlan::scan(Source::Table("cs".into()), "t1");
        p.joins.push(Join {
            table: TableRef { source: Source::Table("ps".into()), alias: "t2".into() },
            on: vec![Cond {
                lhs: Col::new("t2", "id"),
                op: PredOp::Eq,
                rhs: Operand::Col { col: Col::new("t1", "p_id") },
            }],
        });
        assert!(execute_select(&s, &Views::new(), &p).unwrap().rows.is_empty());
    }

    #[test]
    fn unbound_and_unknown_are_errors() {
        let s = store();
        let mut p = SelectPlan::scan(Source::Table("ps".into()), "t1");
        p.filters.push(Cond { lhs: Col::new("t1", "n"), op: PredOp::Eq, rhs: Operand::Param { label: "x".into() } });
        assert!(matches!(execute_select(&s, &Views::new(), &p), Err(EngineError::UnboundParameter { .. })));
        p.filters[0] = Cond { lhs: Col::new("t1", "zz"), op: PredOp::Eq, rhs: Operand::Value { value: Value::Int(1) } };
        assert!(matches!(execute_select(&s, &Views::new(), &p), Err(EngineError::UnknownColumn { .. })));
    }

    #[test]
    fn writes_apply() {
        let mut s = store();
        let ins = Statement::Insert {
            table: "ps".into(),
            values: vec![("n".into(), Operand::Value { value: Value::Int(42) })],
        };
        let w = execute_write(&mut s, &ins).unwrap();
        assert_eq!(w.ids, vec![21]);
        let up = Statement::Update {
            table: "ps".into(),
            id: Operand::Value { value: Value::Int(21) },
            values: vec![("n".into(), Operand::Value { value: Value::Int(7) })],
        };
        execute_write(&mut s, &up).unwrap();
        assert_eq!(s.table("ps").unwrap().get(21).unwrap().values["n"], Value::Int(7));
    }
}
