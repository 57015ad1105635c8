//! Recursive-descent parser for RailLite. See `docs/raillite.ebnf`.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

pub const KEYWORDS: &[&str] = &[
    "model",
    "field",
    "controller",
    "action",
    "def",
    "let",
    "for",
    "in",
    "if",
    "else",
    "render",
    "link_to",
    "form_to",
    "global",
    "param",
    "return",
    "true",
    "false",
    "nil",
];

/// Parse source text into an (unvalidated) [`AppIR`].
pub fn parse_syntax(src: &str) -> Result<AppIR, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { toks: tokens, pos: 0, next_id: 1, cur_stmt: 0 };
    let mut ir = AppIR::default();
    while !p.at_eof() {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Ident(w) if w == "model" => {
                let m = p.model()?;
                ir.models.push(m);
            }
            Tok::Ident(w) if w == "controller" => {
                let c = p.controller()?;
                ir.controllers.push(c);
            }
            Tok::Ident(w) if w == "def" => {
                let h = p.helper()?;
                ir.helpers.push(h);
            }
            Tok::Semi => {
                p.pos += 1;
            }
            _ => return Err(p.error("`model`, `controller` or `def`")),
        }
    }
    ir.routes = ir
        .controllers
        .iter()
        .flat_map(|c| {
            c.actions.iter().map(move |a| Route {
                controller: c.name.clone(),
                action: a.name.clone(),
                method: a.method,
            })
        })
        .collect();
    Ok(ir)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_id: u32,
    cur_stmt: u32,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError::Syntax { line: t.line, col: t.col, expected: expected.to_string(), found: t.tok.describe() }
    }

    fn fresh_id(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn loc_here(&self) -> Location {
        let t = self.peek();
        Location { line: t.line, col: t.col, stmt: self.cur_stmt }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.error(&tok.describe()))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == w)
    }

    fn keyword(&mut self, w: &str) -> Result<(), ParseError> {
        if self.is_word(w) {
            self.advance();
            Ok(())
        } else {
            Err(self.error(&format!("`{w}`")))
        }
    }

    /// A non-keyword identifier.
    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    // -- declarations -------------------------------------------------------

    fn model(&mut self) -> Result<ModelDecl, ParseError> {
        let location = self.loc_here();
        self.keyword("model")?;
        let name = self.ident("model name")?;
        let table = if self.is_word("table") {
            self.advance();
            self.ident("table name")?
        } else {
            table_name(&name)
        };
        self.expect(Tok::LBrace)?;
        let mut fields = vec![FieldDecl { name: "id".into(), kind: FieldKind::Int, location }];
        let mut associations = Vec::new();
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.eat(&Tok::Semi) {
                continue;
            }
            let loc = self.loc_here();
            if self.is_word("field") {
                self.advance();
                let fname = self.ident("field name")?;
                self.expect(Tok::Colon)?;
                let kind = self.field_kind()?;
                fields.push(FieldDecl { name: fname, kind, location: loc });
                continue;
            }
            let kind = match &self.peek().tok {
                Tok::Ident(w) if w == "belongs_to" => AssocKind::BelongsTo,
                Tok::Ident(w) if w == "has_one" => AssocKind::HasOne,
                Tok::Ident(w) if w == "has_many" => AssocKind::HasMany,
                _ => return Err(self.error("`field`, `belongs_to`, `has_one`, `has_many` or `}`")),
            };
            self.advance();
            let aname = self.ident("association name")?;
            self.expect(Tok::Colon)?;
            let target = self.ident("target model")?;
            let foreign_key = if self.is_word("key") {
                self.advance();
                self.ident("foreign key column")?
            } else {
                match kind {
                    AssocKind::BelongsTo => format!("{aname}_id"),
                    _ => format!("{}_id", snake_case(&name)),
                }
            };
            associations.push(Association { name: aname, kind, target, foreign_key, location: loc });
        }
        Ok(ModelDecl { name, table, fields, associations, location })
    }

    fn field_kind(&mut self) -> Result<FieldKind, ParseError> {
        let word = match &self.peek().tok {
            Tok::Ident(w) => w.clone(),
            _ => return Err(self.error("a field type")),
        };
        let kind = match word.as_str() {
            "int" => FieldKind::Int,
            "float" => FieldKind::Float,
            "bool" => FieldKind::Bool,
            "datetime" => FieldKind::Datetime,
            "text" => FieldKind::Text,
            "string" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let n = match self.peek().tok {
                    Tok::Int(n) if n > 0 && n <= u32::MAX as i64 => n as u32,
                    _ => return Err(self.error("a positive string length")),
                };
                self.advance();
                self.expect(Tok::RParen)?;
                return Ok(FieldKind::String { max_len: n });
            }
            _ => return Err(self.error("int, float, bool, datetime, string(n) or text")),
        };
        self.advance();
        Ok(kind)
    }

    fn controller(&mut self) -> Result<ControllerDecl, ParseError> {
        let location = self.loc_here();
        self.keyword("controller")?;
        let name = self.ident("controller name")?;
        self.expect(Tok::LBrace)?;
        let mut actions = Vec::new();
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.eat(&Tok::Semi) {
                continue;
            }
            actions.push(self.action()?);
        }
        Ok(ControllerDecl { name, actions, location })
    }

    fn action(&mut self) -> Result<ActionDecl, ParseError> {
        let location = self.loc_here();
        self.keyword("action")?;
        let name = self.ident("action name")?;
        let method = if self.is_word("GET") {
            self.advance();
            HttpMethod::Get
        } else if self.is_word("POST") {
            self.advance();
            HttpMethod::Post
        } else {
            HttpMethod::Get
        };
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                self.eat(&Tok::Colon);
                params.push(self.ident("parameter name")?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        let body = self.block()?;
        Ok(ActionDecl { name, method, params, body, location })
    }

    fn helper(&mut self) -> Result<HelperDecl, ParseError> {
        let location = self.loc_here();
        self.keyword("def")?;
        let name = self.ident("helper name")?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let pname = self.ident("parameter name")?;
                self.expect(Tok::Colon)?;
                let ty = self.type_ann()?;
                params.push(HelperParam { name: pname, ty });
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        let body = self.block()?;
        Ok(HelperDecl { name, params, body, location })
    }

    fn type_ann(&mut self) -> Result<TypeAnn, ParseError> {
        if self.eat(&Tok::LBracket) {
            let m = self.ident("model name")?;
            self.expect(Tok::RBracket)?;
            return Ok(TypeAnn::Rows(m));
        }
        match &self.peek().tok {
            Tok::Ident(w) if w.starts_with(|c: char| c.is_ascii_uppercase()) => {
                let m = w.clone();
                self.advance();
                Ok(TypeAnn::Record(m))
            }
            _ => Ok(TypeAnn::Field(self.field_kind()?)),
        }
    }

    // -- statements ---------------------------------------------------------

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            if self.eat(&Tok::RBrace) {
                return Ok(out);
            }
            if self.eat(&Tok::Semi) {
                continue;
            }
            if self.at_eof() {
                return Err(self.error("`}`"));
            }
            out.push(self.stmt()?);
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let id = self.fresh_id();
        let outer = self.cur_stmt;
        self.cur_stmt = id;
        let loc = self.loc_here();
        let kind = self.stmt_kind();
        self.cur_stmt = outer;
        Ok(Stmt { id, loc, kind: kind? })
    }

    fn stmt_kind(&mut self) -> Result<StmtKind, ParseError> {
        let word = match &self.peek().tok {
            Tok::Ident(w) => Some(w.clone()),
            _ => None,
        };
        match word.as_deref() {
            Some("let") => {
                self.advance();
                let name = self.ident("variable name")?;
                self.expect(Tok::Assign)?;
                Ok(StmtKind::Let { name, value: self.expr()? })
            }
            Some("global") => {
                self.advance();
                let name = self.ident("global name")?;
                self.expect(Tok::Assign)?;
                Ok(StmtKind::Global { name, value: self.expr()? })
            }
            Some("for") => {
                self.advance();
                let var = self.ident("loop variable")?;
                self.keyword("in")?;
                let iter = self.expr()?;
                let body = self.block()?;
                Ok(StmtKind::For { var, iter, body })
            }
            Some("if") => self.if_stmt(),
            Some("render") => {
                self.advance();
                self.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        args.push(self.expr()?);
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                Ok(StmtKind::Render { args })
            }
            Some("link_to") => {
                self.advance();
                let (controller, action) = self.target()?;
                let mut args = Vec::new();
                self.expect(Tok::LParen)?;
                if !self.eat(&Tok::RParen) {
                    loop {
                        let name = self.ident("argument name")?;
                        self.expect(Tok::Colon)?;
                        args.push(NamedArg { name, value: self.expr()? });
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                Ok(StmtKind::LinkTo { controller, action, args })
            }
            Some("form_to") => {
                self.advance();
                let (controller, action) = self.target()?;
                let mut fields = Vec::new();
                let mut args = Vec::new();
                self.expect(Tok::LParen)?;
                if !self.eat(&Tok::RParen) {
                    loop {
                        let name = self.ident("form field or argument name")?;
                        if self.eat(&Tok::Colon) {
                            args.push(NamedArg { name, value: self.expr()? });
                        } else {
                            fields.push(name);
                        }
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                Ok(StmtKind::FormTo { controller, action, fields, args })
            }
            Some("return") => {
                self.advance();
                Ok(StmtKind::Return { value: self.expr()? })
            }
            _ => {
                let e = self.expr()?;
                if self.eat(&Tok::Assign) {
                    let value = self.expr()?;
                    match e.kind {
                        ExprKind::Ident { name } => Ok(StmtKind::Assign { name, value }),
                        ExprKind::Method { recv, name, args: None } => match recv.kind {
                            ExprKind::Ident { name: target } => {
                                Ok(StmtKind::FieldAssign { target, field: name, value })
                            }
                            _ => Err(ParseError::Syntax {
                                line: e.loc.line,
                                col: e.loc.col,
                                expected: "`variable.field` on the left of `=`".into(),
                                found: "a complex expression".into(),
                            }),
                        },
                        _ => Err(ParseError::Syntax {
                            line: e.loc.line,
                            col: e.loc.col,
                            expected: "assignable expression".into(),
                            found: "expression".into(),
                        }),
                    }
                } else {
                    Ok(StmtKind::Expr { expr: e })
                }
            }
        }
    }

    fn if_stmt(&mut self) -> Result<StmtKind, ParseError> {
        self.keyword("if")?;
        let cond = self.expr()?;
        let then_body = self.block()?;
        let else_body = if self.is_word("else") {
            self.advance();
            if self.is_word("if") {
                vec![self.stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(StmtKind::If { cond, then_body, else_body })
    }

    fn target(&mut self) -> Result<(String, String), ParseError> {
        let c = self.ident("controller name")?;
        self.expect(Tok::Dot)?;
        let a = self.ident("action name")?;
        Ok((c, a))
    }

    // -- expressions --------------------------------------------------------

    fn mk(&mut self, loc: Location, kind: ExprKind) -> Expr {
        Expr { id: self.fresh_id(), loc, kind }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek().tok == Tok::OrOr {
            self.advance();
            let rhs = self.and_expr()?;
            lhs = self.binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.cmp_expr()?;
        while self.peek().tok == Tok::AndAnd {
            self.advance();
            let rhs = self.cmp_expr()?;
            lhs = self.binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add_expr()?;
        let op = match &self.peek().tok {
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Gt => BinOp::Gt,
            Tok::Le => BinOp::Le,
            Tok::Ge => BinOp::Ge,
            Tok::Ident(w) if w == "in" => BinOp::In,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.add_expr()?;
        Ok(self.binary(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.mul_expr()?;
            lhs = self.binary(op, lhs, rhs);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = self.binary(op, lhs, rhs);
        }
    }

    fn binary(&mut self, op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        let loc = lhs.loc;
        self.mk(loc, ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let loc = self.loc_here();
        let op = match self.peek().tok {
            Tok::Bang => UnOp::Not,
            Tok::Minus => UnOp::Neg,
            _ => return self.postfix(),
        };
        self.advance();
        let operand = self.unary()?;
        Ok(self.mk(loc, ExprKind::Unary { op, operand: Box::new(operand) }))
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while self.peek().tok == Tok::Dot {
            self.advance();
            let loc = self.loc_here();
            let name = self.ident("member name")?;
            let args = if self.peek().tok == Tok::LParen { Some(self.args()?) } else { None };
            e = self.mk(loc, ExprKind::Method { recv: Box::new(e), name, args });
        }
        Ok(e)
    }

    fn args(&mut self) -> Result<Vec<Arg>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            let named = matches!(self.peek_at(0), Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()))
                && *self.peek_at(1) == Tok::Colon;
            let name = if named {
                let n = self.ident("argument name")?;
                self.advance();
                Some(n)
            } else {
                None
            };
            args.push(Arg { name, value: self.expr()? });
            if self.eat(&Tok::RParen) {
                return Ok(args);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let loc = self.loc_here();
        let t = self.peek().tok.clone();
        let kind = match t {
            Tok::Int(v) => {
                self.advance();
                ExprKind::Int { value: v }
            }
            Tok::Float(v) => {
                self.advance();
                ExprKind::Float { value: v }
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Str { value: s }
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                return Ok(e);
            }
            Tok::LBracket => {
                self.advance();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if self.eat(&Tok::RBracket) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                ExprKind::List { items }
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "false" => {
                    self.advance();
                    ExprKind::Bool { value: w == "true" }
                }
                "nil" => {
                    self.advance();
                    ExprKind::Nil
                }
                "param" => {
                    self.advance();
                    self.expect(Tok::LParen)?;
                    self.eat(&Tok::Colon);
                    let name = self.ident("parameter name")?;
                    self.expect(Tok::RParen)?;
                    ExprKind::Param { name }
                }
                _ if KEYWORDS.contains(&w.as_str()) => return Err(self.error("an expression")),
                _ => {
                    self.advance();
                    if self.peek().tok == Tok::LParen {
                        let args = self.args()?;
                        ExprKind::Call { name: w, args }
                    } else {
                        ExprKind::Ident { name: w }
                    }
                }
            },
            _ => return Err(self.error("an expression")),
        };
        Ok(self.mk(loc, kind))
    }
}

/// `BlogPost` -> `blog_post`.
pub fn snake_case(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Conventional table name for a model: snake case, pluralized.
pub fn table_name(model: &str) -> String {
    pluralize(&snake_case(model))
}

fn pluralize(word: &str) -> String {
    if word.ends_with('s') || word.ends_with('x') || word.ends_with("ch") || word.ends_with("sh") {
        format!("{word}es")
    } else if let Some(stem) = word.strip_suffix('y') {
        if stem.ends_with(|c: char| "aeiou".contains(c)) {
            format!("{word}s")
        } else {
            format!("{stem}ies")
        }
    } else {
        format!("{word}s")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_names() {
        assert_eq!(table_name("Todo"), "todos");
        assert_eq!(table_name("Status"), "statuses");
        assert_eq!(table_name("Category"), "categories");
        assert_eq!(table_name("BlogPost"), "blog_posts");
        assert_eq!(table_name("Day"), "days");
    }

    #[test]
    fn empty_source() {
        let ir = parse_syntax("").unwrap();
        assert!(ir.models.is_empty() && ir.controllers.is_empty());
    }

    #[test]
    fn model_with_implicit_id_and_default_keys() {
        let ir =
            parse_syntax("model Blog { field title: string(80) belongs_to user: User has_many comments: Comment }")
                .unwrap();
        let m = &ir.models[0];
        assert_eq!(m.fields[0].name, "id");
        assert_eq!(m.fields[1].kind, FieldKind::String { max_len: 80 });
        assert_eq!(m.associations[0].foreign_key, "user_id");
        assert_eq!(m.associations[1].foreign_key, "blog_id");
    }

    #[test]
    fn statement_forms() {
        let ir = parse_syntax(
            r#"controller Todos {
                 action update POST (id, title) {
                   let t = Todo.find(param(:id))
                   t.title = param(:title)
                   t.save
                   if t.done { render(t) } else if t.id > 3 { render(1) }
                   link_to Todos.show(id: t.id)
                   form_to Todos.update(title, id: t.id)
                 }
               }"#,
        )
        .unwrap();
        let a = &ir.controllers[0].actions[0];
        assert_eq!(a.method, HttpMethod::Post);
        assert_eq!(a.body.len(), 6);
        assert!(matches!(a.body[1].kind, StmtKind::FieldAssign { .. }));
        match &a.body[5].kind {
            StmtKind::FormTo { fields, args, .. } => {
                assert_eq!(fields, &vec!["title".to_string()]);
                assert_eq!(args[0].name, "id");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(ir.routes.len(), 1);
    }

    #[test]
    fn ids_follow_file_order() {
        let ir = parse_syntax("controller A { action a() { let x = 1 let y = 2 } }").unwrap();
        let body = &ir.controllers[0].actions[0].body;
        assert!(body[0].id < body[1].id);
        assert_eq!(body[1].loc.stmt, body[1].id);
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_syntax("model A {\n  field x int }").unwrap_err();
        match err {
            ParseError::Syntax { line, col, expected, .. } => {
                assert_eq!((line, col), (2, 11));
                assert!(expected.contains(':'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keywords_are_reserved() {
        assert!(parse_syntax("controller A { action a() { let for = 1 } }").is_err());
    }
}
