//! Canonical description of one ORM query chain.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::lower::LExpr;
use super::NodeId;
use crate::app_model::{AppIR, AssocKind, ModelDecl};
use crate::value::Value;

/// Which relation of a query a column belongs to: the root model or an
/// eager-loaded association.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Root,
    Assoc(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub relation: Relation,
    /// Model owning the column.
    pub model: String,
    pub column: String,
}

impl ColumnRef {
    pub fn root(model: &str, column: &str) -> Self {
        ColumnRef { relation: Relation::Root, model: model.into(), column: column.into() }
    }

    pub fn assoc(assoc: &str, model: &str, column: &str) -> Self {
        ColumnRef { relation: Relation::Assoc(assoc.into()), model: model.into(), column: column.into() }
    }

    pub fn is_key(&self) -> bool {
        self.column == "id"
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.relation {
            Relation::Root => write!(f, "{}.{}", self.model, self.column),
            Relation::Assoc(a) => write!(f, "{a}.{}", self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "IN")]
    In,
}

impl PredOp {
    pub fn sql(self) -> &'static str {
        match self {
            PredOp::Eq => "=",
            PredOp::Ne => "<>",
            PredOp::Lt => "<",
            PredOp::Gt => ">",
            PredOp::In => "IN",
        }
    }

    pub fn eval(self, lhs: &Value, rhs: &Value) -> bool {
        use std::cmp::Ordering::*;
        match self {
            PredOp::Eq => lhs.sql_eq(rhs),
            PredOp::Ne => matches!(lhs.sql_cmp(rhs), Some(Less | Greater)),
            PredOp::Lt => lhs.sql_cmp(rhs) == Some(Less),
            PredOp::Gt => lhs.sql_cmp(rhs) == Some(Greater),
            PredOp::In => !lhs.is_null() && lhs.sql_in(rhs),
        }
    }
}

/// Where a value used by a query comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ValueSource {
    Const { value: Value },
    Param { name: String },
    Var { node: NodeId, column: Option<String> },
    QueryResult { node: NodeId, column: Option<String> },
    Global { name: String },
    Utility { name: String },
}

/// An expression feeding a query slot plus its resolved sources. Sources are
/// filled in by the AFG builder; they are empty on freshly lowered code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueExpr {
    pub expr: LExpr,
    pub sources: Vec<ValueSource>,
}

impl ValueExpr {
    pub fn new(expr: LExpr) -> Self {
        ValueExpr { expr, sources: Vec::new() }
    }

    /// The literal value, if the expression is a constant.
    pub fn constant(&self) -> Option<&Value> {
        self.expr.as_literal()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: PredOp,
    pub value: ValueExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Aggregate {
    Count,
    Any,
    FindByPk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Select,
    Insert,
    Update,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDescriptor {
    pub kind: QueryKind,
    pub root_model: String,
    pub predicates: Vec<Predicate>,
    pub eager_loads: Vec<String>,
    pub order_by: Option<ColumnRef>,
    pub limit: Option<ValueExpr>,
    pub offset: Option<ValueExpr>,
    pub group_by: Option<ColumnRef>,
    pub aggregate: Option<Aggregate>,
    pub projection: Vec<ColumnRef>,
    /// True when the chain narrowed the projection with `select`.
    pub explicit_projection: bool,
    /// Columns written by an insert/update.
    pub assignments: Vec<String>,
    /// The stored query this one extends.
    pub chain_prefix_of: Option<NodeId>,
}

impl QueryDescriptor {
    pub fn select(model: &ModelDecl) -> Self {
        QueryDescriptor {
            kind: QueryKind::Select,
            root_model: model.name.clone(),
            predicates: Vec::new(),
            eager_loads: Vec::new(),
            order_by: None,
            limit: None,
            offset: None,
            group_by: None,
            aggregate: None,
            projection: model.fields.iter().map(|f| ColumnRef::root(&model.name, &f.name)).collect(),
            explicit_projection: false,
            assignments: Vec::new(),
            chain_prefix_of: None,
        }
    }

    pub fn is_read(&self) -> bool {
        self.kind == QueryKind::Select
    }

    /// Rows-returning select that can be stored and extended later.
    pub fn is_relation(&self) -> bool {
        self.is_read() && self.aggregate.is_none()
    }

    /// All value slots with a stable slot id.
    pub fn slots(&self) -> Vec<(Slot, &ValueExpr)> {
        let mut out: Vec<(Slot, &ValueExpr)> =
            self.predicates.iter().enumerate().map(|(i, p)| (Slot::Pred(i), &p.value)).collect();
        if let Some(l) = &self.limit {
            out.push((Slot::Limit, l));
        }
        if let Some(o) = &self.offset {
            out.push((Slot::Offset, o));
        }
        out
    }

    pub fn all_sources(&self) -> impl Iterator<Item = &ValueSource> {
        self.predicates
            .iter()
            .map(|p| &p.value)
            .chain(self.limit.iter())
            .chain(self.offset.iter())
            .flat_map(|v| v.sources.iter())
    }

    /// Model behind a relation of this query.
    pub fn relation_model<'a>(&self, ir: &'a AppIR, rel: &Relation) -> Option<&'a ModelDecl> {
        let root = ir.model(&self.root_model)?;
        match rel {
            Relation::Root => Some(root),
            Relation::Assoc(a) => ir.model(&root.association(a)?.target),
        }
    }

    /// Projection with `select` narrowing and eager loads applied.
    pub fn compute_projection(&mut self, ir: &AppIR, selected: Option<&[String]>) {
        let Some(root) = ir.model(&self.root_model) else { return };
        let mut proj: Vec<ColumnRef> = match selected {
            Some(cols) => cols.iter().map(|c| ColumnRef::root(&root.name, c)).collect(),
            None => root.fields.iter().map(|f| ColumnRef::root(&root.name, &f.name)).collect(),
        };
        for a in &self.eager_loads {
            if let Some(assoc) = root.association(a) {
                if let Some(target) = ir.model(&assoc.target) {
                    proj.extend(target.fields.iter().map(|f| ColumnRef::assoc(a, &target.name, &f.name)));
                }
            }
        }
        self.projection = proj;
    }
}

/// Identifies one value slot of a descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Pred(usize),
    Limit,
    Offset,
}

/// Join keys for an eager-loaded association: `(owner column, target column)`.
pub fn join_keys(kind: AssocKind, foreign_key: &str) -> (String, String) {
    match kind {
        AssocKind::BelongsTo => (foreign_key.to_string(), "id".to_string()),
        AssocKind::HasOne | AssocKind::HasMany => ("id".to_string(), foreign_key.to_string()),
    }
}
