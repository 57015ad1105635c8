//! Canonical SQL for query descriptors and the three rewrite suggestions:
//! projection pruning, producer/consumer combining and shared-prefix views.

mod canon;
pub mod plan;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afg::*;
use crate::app_model::{ActionId, AppIR, Location, ModelDecl};
use crate::detectors::{DetectorKind, Finding, FindingDetail};
use crate::value::Value;

pub use canon::canonical_sql;
pub use plan::{Col, Cond, Join, Operand, OutCol, Output, SelectPlan, Source, Statement, TableRef};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SqlText {
    pub text: String,
}

impl fmt::Display for SqlText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl From<&Statement> for SqlText {
    fn from(s: &Statement) -> Self {
        SqlText { text: s.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum RewriteError {
    #[error("unknown model `{model}`")]
    UnknownModel { model: String },
    #[error("no value bound for {slot}")]
    UnboundParameter { slot: String },
    #[error("every projected column is used")]
    NothingToPrune,
    #[error("no used columns given")]
    NoUsedColumns,
    #[error("column `{column}` is not projected by the query")]
    NotProjected { column: String },
    #[error("not a row-returning select")]
    NotRowQuery,
    #[error("queries cannot be combined: {reason}")]
    NotCombinable { reason: NotCombinable },
    #[error("not a shared-subexpression group: {reason}")]
    InvalidGroup { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotCombinable {
    ProducerAggregate,
    ProducerGroupBy,
    ProducerLimitOrOffset,
    ProducerEagerLoads,
    ConsumerIsWrite,
    NoLinkPredicate,
    LinkNotKey,
    EqualityOverRows,
}

impl fmt::Display for NotCombinable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NotCombinable::ProducerAggregate => "producer aggregates",
            NotCombinable::ProducerGroupBy => "producer groups rows",
            NotCombinable::ProducerLimitOrOffset => "producer has LIMIT or OFFSET",
            NotCombinable::ProducerEagerLoads => "producer eager-loads associations",
            NotCombinable::ConsumerIsWrite => "consumer is a write",
            NotCombinable::NoLinkPredicate => "consumer has no IN/== predicate on the producer's result",
            NotCombinable::LinkNotKey => "link column is not the producer's primary key",
            NotCombinable::EqualityOverRows => "== against a multi-row producer",
        };
        f.write_str(s)
    }
}

/// Values for the non-constant slots of a descriptor. Writes also take the
/// assigned column values and, for updates, the row id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    pub slots: BTreeMap<Slot, Value>,
    pub assignments: BTreeMap<String, Value>,
    pub row_id: Option<Value>,
}

fn slot_label(s: Slot) -> String {
    match s {
        Slot::Pred(i) => format!("predicate {i}"),
        Slot::Limit => "limit".into(),
        Slot::Offset => "offset".into(),
    }
}

fn operand(slot: Slot, v: &ValueExpr, b: Option<&Bindings>) -> Result<Operand, RewriteError> {
    if let Some(c) = v.constant() {
        return Ok(Operand::Value { value: c.clone() });
    }
    match b {
        None => Ok(Operand::Param { label: slot_label(slot) }),
        Some(b) => match b.slots.get(&slot) {
            Some(v) => Ok(Operand::Value { value: v.clone() }),
            None => Err(RewriteError::UnboundParameter { slot: slot_label(slot) }),
        },
    }
}

fn model<'a>(ir: &'a AppIR, name: &str) -> Result<&'a ModelDecl, RewriteError> {
    ir.model(name).ok_or_else(|| RewriteError::UnknownModel { model: name.to_string() })
}

fn alias(i: usize) -> String {
    format!("t{}", i + 1)
}

/// Alias per relation: the root is `t1`, eager loads follow in order.
fn relation_aliases(q: &QueryDescriptor) -> BTreeMap<Relation, String> {
    let mut m = BTreeMap::new();
    m.insert(Relation::Root, alias(0));
    for (i, a) in q.eager_loads.iter().enumerate() {
        m.insert(Relation::Assoc(a.clone()), alias(i + 1));
    }
    m
}

fn eager_join(ir: &AppIR, root: &ModelDecl, assoc: &str, owner: Col, join_alias: &str) -> Result<Join, RewriteError> {
    let a = root
        .association(assoc)
        .ok_or_else(|| RewriteError::UnknownModel { model: format!("{}.{assoc}", root.name) })?;
    let target = model(ir, &a.target)?;
    let (_, target_col) = join_keys(a.kind, &a.foreign_key);
    Ok(Join {
        table: TableRef { source: Source::Table(target.table.clone()), alias: join_alias.to_string() },
        on: vec![Cond { lhs: Col::new(join_alias, target_col), op: PredOp::Eq, rhs: Operand::Col { col: owner } }],
    })
}

fn owner_column(root: &ModelDecl, assoc: &str) -> String {
    root.association(assoc).map(|a| join_keys(a.kind, &a.foreign_key).0).unwrap_or_else(|| "id".into())
}

/// Plan for a select descriptor. Without bindings, non-constant slots become
/// placeholders; with bindings, a missing slot is an error.
pub fn plan_select(q: &QueryDescriptor, ir: &AppIR, b: Option<&Bindings>) -> Result<SelectPlan, RewriteError> {
    let root = model(ir, &q.root_model)?;
    let aliases = relation_aliases(q);
    let col = |c: &ColumnRef| Col::new(aliases.get(&c.relation).cloned().unwrap_or_else(|| alias(0)), &c.column);
    let mut p = SelectPlan::scan(Source::Table(root.table.clone()), &alias(0));
    for (i, a) in q.eager_loads.iter().enumerate() {
        p.joins.push(eager_join(ir, root, a, Col::new(alias(0), owner_column(root, a)), &alias(i + 1))?);
    }
    for (i, pr) in q.predicates.iter().enumerate() {
        p.filters.push(Cond { lhs: col(&pr.column), op: pr.op, rhs: operand(Slot::Pred(i), &pr.value, b)? });
    }
    p.group_by = q.group_by.as_ref().map(col);
    p.order_by = q.order_by.as_ref().map(col);
    p.limit = q.limit.as_ref().map(|v| operand(Slot::Limit, v, b)).transpose()?;
    p.offset = q.offset.as_ref().map(|v| operand(Slot::Offset, v, b)).transpose()?;
    p.output = match q.aggregate {
        Some(Aggregate::Count) | Some(Aggregate::Any) => Output::Count,
        _ if q.explicit_projection => {
            Output::Columns(q.projection.iter().map(|c| OutCol { col: col(c), name: None }).collect())
        }
        _ => Output::All,
    };
    Ok(p)
}

/// Statement for any descriptor, reads and writes alike.
pub fn plan_statement(q: &QueryDescriptor, ir: &AppIR, b: Option<&Bindings>) -> Result<Statement, RewriteError> {
    let root = model(ir, &q.root_model)?;
    let assigned = |c: &String| -> Result<(String, Operand), RewriteError> {
        let v = match b {
            None => Operand::Param { label: c.clone() },
            Some(b) => match b.assignments.get(c) {
                Some(v) => Operand::Value { value: v.clone() },
                None => return Err(RewriteError::UnboundParameter { slot: format!("column {c}") }),
            },
        };
        Ok((c.clone(), v))
    };
    match q.kind {
        QueryKind::Select => Ok(Statement::Select(plan_select(q, ir, b)?)),
        QueryKind::Insert => Ok(Statement::Insert {
            table: root.table.clone(),
            values: q.assignments.iter().map(assigned).collect::<Result<_, _>>()?,
        }),
        QueryKind::Update => {
            let id = match b {
                None => Operand::Param { label: "id".into() },
                Some(b) => match &b.row_id {
                    Some(v) => Operand::Value { value: v.clone() },
                    None => return Err(RewriteError::UnboundParameter { slot: "row id".into() }),
                },
            };
            Ok(Statement::Update {
                table: root.table.clone(),
                id,
                values: q.assignments.iter().map(assigned).collect::<Result<_, _>>()?,
            })
        }
    }
}

/// Template SQL: constants inline, everything else as `?`.
pub fn emit_sql(q: &QueryDescriptor, ir: &AppIR) -> Result<SqlText, RewriteError> {
    Ok(SqlText::from(&plan_statement(q, ir, None)?))
}

/// Executable SQL with every slot bound.
pub fn emit_bound_sql(q: &QueryDescriptor, ir: &AppIR, b: &Bindings) -> Result<SqlText, RewriteError> {
    Ok(SqlText::from(&plan_statement(q, ir, Some(b))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewriteKind {
    PruneProjection,
    CombineQueries,
    SharedView,
}

/// The finding a suggestion answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingRef {
    pub detector: DetectorKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<ActionId>,
    pub location: Location,
}

impl From<&Finding> for FindingRef {
    fn from(f: &Finding) -> Self {
        FindingRef { detector: f.detector(), action: f.action.clone(), location: f.location }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RewriteSuggestion {
    pub kind: RewriteKind,
    pub original_queries: Vec<NodeId>,
    pub original_sql: Vec<SqlText>,
    pub suggested_sql: Vec<SqlText>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    pub rationale: Vec<FindingRef>,
}

impl RewriteSuggestion {
    fn new(kind: RewriteKind) -> Self {
        RewriteSuggestion {
            kind,
            original_queries: Vec::new(),
            original_sql: Vec::new(),
            suggested_sql: Vec::new(),
            notes: Vec::new(),
            rationale: Vec::new(),
        }
    }
}

/// Plan for `q` retrieving only `used` plus the primary key of every
/// involved table.
pub fn prune_plan(
    q: &QueryDescriptor,
    used: &BTreeSet<ColumnRef>,
    ir: &AppIR,
    b: Option<&Bindings>,
) -> Result<SelectPlan, RewriteError> {
    if !q.is_read() || !matches!(q.aggregate, None | Some(Aggregate::FindByPk)) {
        return Err(RewriteError::NotRowQuery);
    }
    if used.is_empty() {
        return Err(RewriteError::NoUsedColumns);
    }
    if let Some(c) = used.iter().find(|c| !q.projection.contains(c)) {
        return Err(RewriteError::NotProjected { column: c.to_string() });
    }
    if q.projection.iter().filter(|c| !c.is_key()).all(|c| used.contains(c)) {
        return Err(RewriteError::NothingToPrune);
    }
    let mut p = plan_select(q, ir, b)?;
    let aliases = relation_aliases(q);
    let mut relations = vec![Relation::Root];
    relations.extend(q.eager_loads.iter().map(|a| Relation::Assoc(a.clone())));
    let mut cols = Vec::new();
    for rel in &relations {
        let a = &aliases[rel];
        cols.push(OutCol { col: Col::new(a, "id"), name: None });
        for c in q.projection.iter().filter(|c| &c.relation == rel && !c.is_key() && used.contains(c)) {
            cols.push(OutCol { col: Col::new(a, &c.column), name: None });
        }
    }
    p.output = Output::Columns(cols);
    Ok(p)
}

pub fn prune_projection(
    q: &QueryDescriptor,
    used: &BTreeSet<ColumnRef>,
    ir: &AppIR,
) -> Result<RewriteSuggestion, RewriteError> {
    let p = prune_plan(q, used, ir, None)?;
    let mut s = RewriteSuggestion::new(RewriteKind::PruneProjection);
    s.original_sql.push(emit_sql(q, ir)?);
    s.suggested_sql.push(SqlText::from(&Statement::Select(p)));
    Ok(s)
}

/// Index of the consumer predicate fed by `producer`'s `link` column.
fn link_predicate(producer: NodeId, consumer: &QueryDescriptor, link: &str) -> Option<usize> {
    let want = ValueSource::QueryResult { node: producer, column: Some(link.to_string()) };
    consumer.predicates.iter().position(|p| {
        matches!(p.op, PredOp::In | PredOp::Eq)
            && p.column.relation == Relation::Root
            && p.value.sources == [want.clone()]
    })
}

/// Join plan equivalent to running `consumer` with `producer`'s rows bound.
pub fn combine_plan(
    ir: &AppIR,
    producer_node: NodeId,
    producer: &QueryDescriptor,
    consumer: &QueryDescriptor,
    link: &str,
    pb: Option<&Bindings>,
    cb: Option<&Bindings>,
) -> Result<SelectPlan, RewriteError> {
    let no = |reason| Err(RewriteError::NotCombinable { reason });
    if !consumer.is_read() {
        return no(NotCombinable::ConsumerIsWrite);
    }
    if producer.aggregate.is_some() {
        return no(NotCombinable::ProducerAggregate);
    }
    if producer.group_by.is_some() {
        return no(NotCombinable::ProducerGroupBy);
    }
    if producer.limit.is_some() || producer.offset.is_some() {
        return no(NotCombinable::ProducerLimitOrOffset);
    }
    if !producer.eager_loads.is_empty() {
        return no(NotCombinable::ProducerEagerLoads);
    }
    let Some(li) = link_predicate(producer_node, consumer, link) else {
        return no(NotCombinable::NoLinkPredicate);
    };
    if link != "id" {
        return no(NotCombinable::LinkNotKey);
    }
    if consumer.predicates[li].op == PredOp::Eq {
        return no(NotCombinable::EqualityOverRows);
    }

    // The link slot is replaced by the join, so it needs no binding.
    let cb_filled: Option<Bindings> = cb.map(|b| {
        let mut b = b.clone();
        b.slots.entry(Slot::Pred(li)).or_insert(Value::Null);
        b
    });
    let mut p = plan_select(consumer, ir, cb_filled.as_ref())?;
    let consumer_filters = std::mem::take(&mut p.filters);
    let pm = model(ir, &producer.root_model)?;
    let pa = alias(p.joins.len() + 1);
    let mut on = Vec::new();
    for (i, pr) in producer.predicates.iter().enumerate() {
        on.push(Cond { lhs: Col::new(&pa, &pr.column.column), op: pr.op, rhs: operand(Slot::Pred(i), &pr.value, pb)? });
    }
    for (i, c) in consumer_filters.into_iter().enumerate() {
        if i == li {
            on.push(Cond { lhs: c.lhs, op: PredOp::Eq, rhs: Operand::Col { col: Col::new(&pa, link) } });
        } else {
            on.push(c);
        }
    }
    p.joins.push(Join { table: TableRef { source: Source::Table(pm.table.clone()), alias: pa }, on });
    Ok(p)
}

pub fn combine_queries(
    ir: &AppIR,
    producer_node: NodeId,
    producer: &QueryDescriptor,
    consumer: &QueryDescriptor,
    link: &str,
) -> Result<RewriteSuggestion, RewriteError> {
    let p = combine_plan(ir, producer_node, producer, consumer, link, None, None)?;
    let mut s = RewriteSuggestion::new(RewriteKind::CombineQueries);
    s.original_sql.push(emit_sql(producer, ir)?);
    s.original_sql.push(emit_sql(consumer, ir)?);
    s.suggested_sql.push(SqlText::from(&Statement::Select(p)));
    Ok(s)
}

/// Column name a view exposes for `c`.
fn view_column(root: &ModelDecl, rel: &Relation, column: &str) -> String {
    match rel {
        Relation::Root => format!("{}_{column}", root.table),
        Relation::Assoc(a) => format!("{a}_{column}"),
    }
}

/// A view over a group's shared prefix plus each member rewritten to read
/// from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedViewPlan {
    pub name: String,
    pub view: SelectPlan,
    pub members: Vec<SelectPlan>,
    pub notes: Vec<String>,
}

pub fn view_name(ir: &AppIR, base_node: NodeId, base: &QueryDescriptor) -> String {
    let table = ir.model(&base.root_model).map(|m| m.table.as_str()).unwrap_or("q");
    format!("shared_{table}_{}", base_node.0)
}

pub fn shared_view_plan(
    ir: &AppIR,
    base_node: NodeId,
    base: &QueryDescriptor,
    members: &[&QueryDescriptor],
    bb: Option<&Bindings>,
    mb: Option<&[Bindings]>,
) -> Result<SharedViewPlan, RewriteError> {
    let bad = |reason: &str| Err(RewriteError::InvalidGroup { reason: reason.to_string() });
    if members.len() < 2 {
        return bad("fewer than two members");
    }
    if !base.is_relation() {
        return bad("base is not a relation");
    }
    let root = model(ir, &base.root_model)?;
    let name = view_name(ir, base_node, base);
    let mut notes = Vec::new();

    let mut view = plan_select(base, ir, bb)?;
    view.order_by = None;
    let mut cols = Vec::new();
    let mut relations = vec![Relation::Root];
    relations.extend(base.eager_loads.iter().map(|a| Relation::Assoc(a.clone())));
    let aliases = relation_aliases(base);
    for rel in &relations {
        let Some(m) = base.relation_model(ir, rel) else { continue };
        for f in &m.fields {
            cols.push(OutCol { col: Col::new(&aliases[rel], &f.name), name: Some(view_column(root, rel, &f.name)) });
        }
    }
    view.output = Output::Columns(cols);
    if base.group_by.is_some() {
        notes.push("the shared prefix groups rows; members must not aggregate again".into());
    }
    if base.limit.is_some() || base.offset.is_some() {
        notes.push("the shared prefix has LIMIT/OFFSET; member predicates now apply after it".into());
    }

    let mut out = Vec::new();
    for (mi, m) in members.iter().enumerate() {
        if m.root_model != base.root_model || m.predicates.len() < base.predicates.len() {
            return bad("member does not extend the base");
        }
        let b = mb.map(|all| &all[mi]);
        let k = base.predicates.len();
        let t1 = alias(0);
        let extra: Vec<&String> = m.eager_loads.iter().filter(|a| !base.eager_loads.contains(a)).collect();
        let extra_alias = |a: &str| extra.iter().position(|e| e.as_str() == a).map(|i| alias(i + 1));
        let col = |c: &ColumnRef| -> Col {
            match &c.relation {
                Relation::Assoc(a) if !base.eager_loads.contains(a) => {
                    Col::new(extra_alias(a).unwrap_or_else(|| t1.clone()), &c.column)
                }
                rel => Col::new(&t1, view_column(root, rel, &c.column)),
            }
        };
        let mut p = SelectPlan::scan(Source::View(name.clone()), &t1);
        for a in &extra {
            let owner = Col::new(&t1, view_column(root, &Relation::Root, &owner_column(root, a)));
            p.joins.push(eager_join(ir, root, a, owner, &extra_alias(a).unwrap_or_default())?);
        }
        for (i, pr) in m.predicates.iter().enumerate().skip(k) {
            p.filters.push(Cond { lhs: col(&pr.column), op: pr.op, rhs: operand(Slot::Pred(i), &pr.value, b)? });
        }
        p.group_by = if base.group_by.is_some() { None } else { m.group_by.as_ref().map(col) };
        p.order_by = m.order_by.as_ref().map(col);
        let own_limit = m.limit.is_some() && m.limit != base.limit;
        let own_offset = m.offset.is_some() && m.offset != base.offset;
        p.limit = if own_limit { m.limit.as_ref().map(|v| operand(Slot::Limit, v, b)).transpose()? } else { None };
        p.offset = if own_offset { m.offset.as_ref().map(|v| operand(Slot::Offset, v, b)).transpose()? } else { None };
        p.output = match m.aggregate {
            Some(Aggregate::Count) | Some(Aggregate::Any) => Output::Count,
            _ if m.explicit_projection => {
                Output::Columns(m.projection.iter().map(|c| OutCol { col: col(c), name: None }).collect())
            }
            _ => Output::All,
        };
        out.push(p);
    }
    Ok(SharedViewPlan { name, view, members: out, notes })
}

pub fn suggest_shared_view(
    ir: &AppIR,
    base_node: NodeId,
    base: &QueryDescriptor,
    members: &[&QueryDescriptor],
) -> Result<RewriteSuggestion, RewriteError> {
    let plan = shared_view_plan(ir, base_node, base, members, None, None)?;
    let mut s = RewriteSuggestion::new(RewriteKind::SharedView);
    for m in members {
        s.original_sql.push(emit_sql(m, ir)?);
    }
    s.suggested_sql.push(SqlText::from(&Statement::CreateView { name: plan.name.clone(), plan: plan.view }));
    for m in plan.members {
        s.suggested_sql.push(SqlText::from(&Statement::Select(m)));
    }
    s.notes = plan.notes;
    Ok(s)
}

/// A finding for which no rewrite applies, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inapplicable {
    pub rationale: FindingRef,
    pub reason: RewriteError,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Rewrites {
    pub suggestions: Vec<RewriteSuggestion>,
    pub inapplicable: Vec<Inapplicable>,
}

/// Rewrite suggestions for every unused-column, query-only-sink and
/// shared-subexpression finding.
pub fn suggest_rewrites(ir: &AppIR, graph: &ActionGraph, findings: &[Finding]) -> Rewrites {
    let mut out = Rewrites::default();
    for f in findings {
        let Some(afg) = f.action.as_ref().and_then(|a| graph.afg(a)) else { continue };
        let rationale = FindingRef::from(f);
        let result: Vec<(Vec<NodeId>, Result<RewriteSuggestion, RewriteError>)> = match &f.detail {
            FindingDetail::UnusedColumns { query, unused_columns, .. } if !unused_columns.is_empty() => {
                let Some(d) = afg.node(*query).descriptor() else { continue };
                let used: BTreeSet<ColumnRef> =
                    d.projection.iter().filter(|c| !c.is_key() && !unused_columns.contains(c)).cloned().collect();
                vec![(vec![*query], prune_projection(d, &used, ir))]
            }
            FindingDetail::QueryOnlySink { query, consumer_queries } => {
                let Some(pd) = afg.node(*query).descriptor() else { continue };
                consumer_queries
                    .iter()
                    .filter_map(|c| {
                        let cd = afg.node(*c).descriptor()?;
                        let link = cd
                            .all_sources()
                            .find_map(|s| match s {
                                ValueSource::QueryResult { node, column: Some(col) } if node == query => {
                                    Some(col.clone())
                                }
                                _ => None,
                            })
                            .unwrap_or_default();
                        Some((vec![*query, *c], combine_queries(ir, *query, pd, cd, &link)))
                    })
                    .collect()
            }
            FindingDetail::SharedSubexpression { base_query, extended_queries } => {
                let Some(bd) = afg.node(*base_query).descriptor() else { continue };
                let members: Vec<&QueryDescriptor> =
                    extended_queries.iter().filter_map(|m| afg.node(*m).descriptor()).collect();
                vec![(extended_queries.clone(), suggest_shared_view(ir, *base_query, bd, &members))]
            }
            _ => continue,
        };
        for (queries, r) in result {
            match r {
                Ok(mut s) => {
                    s.original_queries = queries;
                    s.rationale.push(rationale.clone());
                    out.suggestions.push(s);
                }
                Err(reason) => out.inapplicable.push(Inapplicable { rationale: rationale.clone(), reason }),
            }
        }
    }
    out
}
