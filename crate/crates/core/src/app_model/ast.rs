//! Application IR produced by the RailLite parser.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const IR_VERSION: u32 = 1;

/// Source position of a declaration, statement or expression. `stmt` is the
/// id of the enclosing statement (0 for declarations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct Location {
    pub line: u32,
    pub col: u32,
    pub stmt: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Int,
    Float,
    Bool,
    Datetime,
    String { max_len: u32 },
    Text,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Int => f.write_str("int"),
            FieldKind::Float => f.write_str("float"),
            FieldKind::Bool => f.write_str("bool"),
            FieldKind::Datetime => f.write_str("datetime"),
            FieldKind::String { max_len } => write!(f, "string({max_len})"),
            FieldKind::Text => f.write_str("text"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub kind: FieldKind,
    pub location: Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssocKind {
    BelongsTo,
    HasOne,
    HasMany,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub name: String,
    pub kind: AssocKind,
    pub target: String,
    pub foreign_key: String,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDecl {
    pub name: String,
    pub table: String,
    /// Always starts with the implicit `id: int` primary key.
    pub fields: Vec<FieldDecl>,
    pub associations: Vec<Association>,
    pub location: Location,
}

impl ModelDecl {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn association(&self, name: &str) -> Option<&Association> {
        self.associations.iter().find(|a| a.name == name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HttpMethod::Get => f.write_str("GET"),
            HttpMethod::Post => f.write_str("POST"),
        }
    }
}

/// `(controller, action)` pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId {
    pub controller: String,
    pub action: String,
}

impl ActionId {
    pub fn new(controller: impl Into<String>, action: impl Into<String>) -> Self {
        ActionId { controller: controller.into(), action: action.into() }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.controller, self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDecl {
    pub name: String,
    pub method: HttpMethod,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerDecl {
    pub name: String,
    pub actions: Vec<ActionDecl>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "of", rename_all = "snake_case")]
pub enum TypeAnn {
    Field(FieldKind),
    Record(String),
    Rows(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperParam {
    pub name: String,
    pub ty: TypeAnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperDecl {
    pub name: String,
    pub params: Vec<HelperParam>,
    pub body: Vec<Stmt>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Route {
    pub controller: String,
    pub action: String,
    pub method: HttpMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AppIR {
    pub ir_version: u32,
    pub models: Vec<ModelDecl>,
    pub controllers: Vec<ControllerDecl>,
    pub helpers: Vec<HelperDecl>,
    pub routes: Vec<Route>,
}

impl Default for AppIR {
    fn default() -> Self {
        AppIR {
            ir_version: IR_VERSION,
            models: Vec::new(),
            controllers: Vec::new(),
            helpers: Vec::new(),
            routes: Vec::new(),
        }
    }
}

impl AppIR {
    pub fn model(&self, name: &str) -> Option<&ModelDecl> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn model_by_table(&self, table: &str) -> Option<&ModelDecl> {
        self.models.iter().find(|m| m.table == table)
    }

    pub fn helper(&self, name: &str) -> Option<&HelperDecl> {
        self.helpers.iter().find(|h| h.name == name)
    }

    pub fn action(&self, id: &ActionId) -> Option<&ActionDecl> {
        self.controllers
            .iter()
            .find(|c| c.name == id.controller)
            .and_then(|c| c.actions.iter().find(|a| a.name == id.action))
    }

    /// All actions in declaration order.
    pub fn action_ids(&self) -> Vec<ActionId> {
        self.controllers.iter().flat_map(|c| c.actions.iter().map(move |a| ActionId::new(&c.name, &a.name))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("AppIR serializes")
    }

    pub fn from_json(text: &str) -> Result<AppIR, serde_json::Error> {
        serde_json::from_str(text)
    }
}

// ---------------------------------------------------------------------------
// Statements and expressions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stmt {
    pub id: u32,
    pub loc: Location,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArg {
    pub name: String,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stmt", rename_all = "snake_case")]
pub enum StmtKind {
    Let { name: String, value: Expr },
    Assign { name: String, value: Expr },
    FieldAssign { target: String, field: String, value: Expr },
    Global { name: String, value: Expr },
    For { var: String, iter: Expr, body: Vec<Stmt> },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt> },
    Render { args: Vec<Expr> },
    LinkTo { controller: String, action: String, args: Vec<NamedArg> },
    FormTo { controller: String, action: String, fields: Vec<String>, args: Vec<NamedArg> },
    Return { value: Expr },
    Expr { expr: Expr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    In,
    And,
    Or,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::In => "in",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arg {
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub id: u32,
    pub loc: Location,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "snake_case")]
pub enum ExprKind {
    Int {
        value: i64,
    },
    Float {
        value: f64,
    },
    Str {
        value: String,
    },
    Bool {
        value: bool,
    },
    Nil,
    Ident {
        name: String,
    },
    Param {
        name: String,
    },
    /// Free function call: helper or builtin utility.
    Call {
        name: String,
        args: Vec<Arg>,
    },
    /// `recv.name` (args = None) or `recv.name(args)`.
    Method {
        recv: Box<Expr>,
        name: String,
        args: Option<Vec<Arg>>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Unary {
        op: UnOp,
        operand: Box<Expr>,
    },
    List {
        items: Vec<Expr>,
    },
}

/// Visit every statement (pre-order), including nested bodies.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::For { body, .. } => walk_stmts(body, f),
            StmtKind::If { then_body, else_body, .. } => {
                walk_stmts(then_body, f);
                walk_stmts(else_body, f);
            }
            _ => {}
        }
    }
}

/// Expressions directly owned by a statement (not those of nested bodies).
pub fn stmt_exprs(stmt: &Stmt) -> Vec<&Expr> {
    match &stmt.kind {
        StmtKind::Let { value, .. }
        | StmtKind::Assign { value, .. }
        | StmtKind::FieldAssign { value, .. }
        | StmtKind::Global { value, .. }
        | StmtKind::Return { value } => vec![value],
        StmtKind::For { iter, .. } => vec![iter],
        StmtKind::If { cond, .. } => vec![cond],
        StmtKind::Render { args } => args.iter().collect(),
        StmtKind::LinkTo { args, .. } | StmtKind::FormTo { args, .. } => args.iter().map(|a| &a.value).collect(),
        StmtKind::Expr { expr } => vec![expr],
    }
}

/// Visit an expression tree (pre-order).
pub fn walk_expr<'a>(e: &'a Expr, f: &mut impl FnMut(&'a Expr)) {
    f(e);
    match &e.kind {
        ExprKind::Call { args, .. } => args.iter().for_each(|a| walk_expr(&a.value, f)),
        ExprKind::Method { recv, args, .. } => {
            walk_expr(recv, f);
            if let Some(args) = args {
                args.iter().for_each(|a| walk_expr(&a.value, f));
            }
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            walk_expr(lhs, f);
            walk_expr(rhs, f);
        }
        ExprKind::Unary { operand, .. } => walk_expr(operand, f),
        ExprKind::List { items } => items.iter().for_each(|i| walk_expr(i, f)),
        _ => {}
    }
}
