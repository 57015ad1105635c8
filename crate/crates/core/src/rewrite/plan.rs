//! A small relational plan for the canonical SQL subset. The printer and
//! the simulator engine both consume it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::afg::PredOp;
use crate::value::Value;

/// Column reference qualified by a table alias.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Col {
    pub alias: String,
    pub column: String,
}

impl Col {
    pub fn new(alias: impl Into<String>, column: impl Into<String>) -> Self {
        Col { alias: alias.into(), column: column.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operand", rename_all = "snake_case")]
pub enum Operand {
    Col {
        col: Col,
    },
    Value {
        value: Value,
    },
    /// Unbound placeholder, printed as `?`.
    Param {
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cond {
    pub lhs: Col,
    pub op: PredOp,
    pub rhs: Operand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", content = "name", rename_all = "snake_case")]
pub enum Source {
    Table(String),
    View(String),
}

impl Source {
    pub fn name(&self) -> &str {
        match self {
            Source::Table(n) | Source::View(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRef {
    pub source: Source,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Join {
    pub table: TableRef,
    pub on: Vec<Cond>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutCol {
    pub col: Col,
    /// Output name (`AS name`), used by view definitions.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "output", content = "columns", rename_all = "snake_case")]
pub enum Output {
    All,
    Columns(Vec<OutCol>),
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectPlan {
    pub from: TableRef,
    pub joins: Vec<Join>,
    pub filters: Vec<Cond>,
    pub group_by: Option<Col>,
    pub order_by: Option<Col>,
    pub limit: Option<Operand>,
    pub offset: Option<Operand>,
    pub output: Output,
}

impl SelectPlan {
    pub fn scan(source: Source, alias: &str) -> Self {
        SelectPlan {
            from: TableRef { source, alias: alias.to_string() },
            joins: Vec::new(),
            filters: Vec::new(),
            group_by: None,
            order_by: None,
            limit: None,
            offset: None,
            output: Output::All,
        }
    }

    /// Table references in join order.
    pub fn tables(&self) -> impl Iterator<Item = &TableRef> {
        std::iter::once(&self.from).chain(self.joins.iter().map(|j| &j.table))
    }

    pub fn operands(&self) -> impl Iterator<Item = &Operand> {
        self.joins
            .iter()
            .flat_map(|j| j.on.iter())
            .chain(self.filters.iter())
            .map(|c| &c.rhs)
            .chain(self.limit.iter())
            .chain(self.offset.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statement", rename_all = "snake_case")]
pub enum Statement {
    Select(SelectPlan),
    Insert { table: String, values: Vec<(String, Operand)> },
    Update { table: String, id: Operand, values: Vec<(String, Operand)> },
    CreateView { name: String, plan: SelectPlan },
}

struct Printer<'a> {
    plan: &'a SelectPlan,
}

impl Printer<'_> {
    fn col(&self, c: &Col) -> String {
        format!("{}.{}", c.alias, c.column)
    }

    fn operand(&self, o: &Operand) -> String {
        match o {
            Operand::Col { col } => self.col(col),
            Operand::Value { value } => value_sql(value),
            Operand::Param { .. } => "?".into(),
        }
    }

    fn cond(&self, c: &Cond) -> String {
        let rhs = match (&c.op, &c.rhs) {
            (PredOp::In, Operand::Param { .. }) => "(?)".to_string(),
            (PredOp::In, Operand::Value { value: v @ Value::List(_) }) => value_sql(v),
            (PredOp::In, other) => format!("({})", self.operand(other)),
            (_, other) => self.operand(other),
        };
        format!("{} {} {rhs}", self.col(&c.lhs), c.op.sql())
    }

    fn table(&self, t: &TableRef) -> String {
        format!("{} AS {}", t.source.name(), t.alias)
    }

    fn print(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.plan;
        let output = match &p.output {
            Output::All => "*".to_string(),
            Output::Count => "COUNT(*)".to_string(),
            Output::Columns(cols) => cols
                .iter()
                .map(|c| match &c.name {
                    Some(n) => format!("{} AS {n}", self.col(&c.col)),
                    None => self.col(&c.col),
                })
                .collect::<Vec<_>>()
                .join(", "),
        };
        write!(f, "SELECT {output} FROM {}", self.table(&p.from))?;
        for j in &p.joins {
            write!(f, " INNER JOIN {}", self.table(&j.table))?;
            if !j.on.is_empty() {
                let on: Vec<String> = j.on.iter().map(|c| self.cond(c)).collect();
                write!(f, " ON {}", on.join(" AND "))?;
            }
        }
        if !p.filters.is_empty() {
            let w: Vec<String> = p.filters.iter().map(|c| self.cond(c)).collect();
            write!(f, " WHERE {}", w.join(" AND "))?;
        }
        if let Some(g) = &p.group_by {
            write!(f, " GROUP BY {}", self.col(g))?;
        }
        if let Some(o) = &p.order_by {
            write!(f, " ORDER BY {}", self.col(o))?;
        }
        if let Some(l) = &p.limit {
            write!(f, " LIMIT {}", self.operand(l))?;
        }
        if let Some(o) = &p.offset {
            write!(f, " OFFSET {}", self.operand(o))?;
        }
        Ok(())
    }
}

fn value_sql(v: &Value) -> String {
    match v {
        Value::List(items) if items.is_empty() => "(NULL)".into(),
        other => other.to_sql(),
    }
}

impl fmt::Display for SelectPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer { plan: self }.print(f)
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bare = |o: &Operand| match o {
            Operand::Value { value } => value_sql(value),
            Operand::Col { col } => col.column.clone(),
            Operand::Param { .. } => "?".into(),
        };
        match self {
            Statement::Select(p) => p.fmt(f),
            Statement::Insert { table, values } => {
                let cols: Vec<&str> = values.iter().map(|(c, _)| c.as_str()).collect();
                let vals: Vec<String> = values.iter().map(|(_, v)| bare(v)).collect();
                write!(f, "INSERT INTO {table} ({}) VALUES ({})", cols.join(", "), vals.join(", "))
            }
            Statement::Update { table, id, values } => {
                let sets: Vec<String> = values.iter().map(|(c, v)| format!("{c} = {}", bare(v))).collect();
                write!(f, "UPDATE {table} SET {} WHERE id = {}", sets.join(", "), bare(id))
            }
            Statement::CreateView { name, plan } => write!(f, "CREATE VIEW {name} AS {plan}"),
        }
    }
}
