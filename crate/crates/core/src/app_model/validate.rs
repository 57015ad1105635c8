use std::collections::BTreeSet;

use super::ast::*;
use super::parser::KEYWORDS;
use super::Diagnostic;
use crate::afg::lower::lower_action;

/// Check every [`AppIR`] invariant. Returns an empty list iff the IR is
/// well formed. Declaration problems are reported first; bodies are only
/// type-checked once declarations are clean.
pub fn validate(ir: &AppIR) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    check_models(ir, &mut diags);
    check_controllers(ir, &mut diags);
    check_helpers(ir, &mut diags);
    if !diags.is_empty() {
        diags.sort();
        return diags;
    }
    for id in ir.action_ids() {
        if let Err(errs) = lower_action(ir, &id) {
            diags.extend(errs);
        }
    }
    diags.sort();
    diags.dedup();
    diags
}

fn check_models(ir: &AppIR, diags: &mut Vec<Diagnostic>) {
    let mut names = BTreeSet::new();
    let mut tables = BTreeSet::new();
    for m in &ir.models {
        if !names.insert(m.name.as_str()) {
            diags.push(Diagnostic::duplicate(&m.name, m.location));
        }
        if !tables.insert(m.table.as_str()) {
            diags.push(Diagnostic::duplicate(&m.table, m.location));
        }
        let pk_count = m.fields.iter().filter(|f| f.name == "id").count();
        if pk_count != 1 || m.fields.first().map(|f| f.name.as_str()) != Some("id") {
            let loc = m.fields.iter().filter(|f| f.name == "id").nth(1).map_or(m.location, |f| f.location);
            if pk_count > 1 {
                diags.push(Diagnostic::duplicate("id", loc));
            } else {
                diags.push(Diagnostic::invalid(
                    format!("model {} must start with the primary key `id`", m.name),
                    m.location,
                ));
            }
        }
        let mut members = BTreeSet::new();
        for f in &m.fields {
            if f.name != "id" && !members.insert(f.name.as_str()) {
                diags.push(Diagnostic::duplicate(&f.name, f.location));
            }
            if let FieldKind::String { max_len: 0 } = f.kind {
                diags.push(Diagnostic::invalid(format!("string field {} needs a length > 0", f.name), f.location));
            }
            if KEYWORDS.contains(&f.name.as_str()) {
                diags.push(Diagnostic::invalid(format!("`{}` is a reserved word", f.name), f.location));
            }
        }
        for a in &m.associations {
            if !members.insert(a.name.as_str()) || a.name == "id" {
                diags.push(Diagnostic::duplicate(&a.name, a.location));
            }
            let Some(target) = ir.model(&a.target) else {
                diags.push(Diagnostic::unresolved(&a.target, a.location));
                continue;
            };
            let (holder, holder_name) = match a.kind {
                AssocKind::BelongsTo => (m, &m.name),
                AssocKind::HasOne | AssocKind::HasMany => (target, &target.name),
            };
            if holder.field(&a.foreign_key).is_none() {
                diags.push(Diagnostic::unresolved(format!("{holder_name}.{}", a.foreign_key), a.location));
            }
        }
    }
}

fn check_controllers(ir: &AppIR, diags: &mut Vec<Diagnostic>) {
    let mut names = BTreeSet::new();
    for c in &ir.controllers {
        if !names.insert(c.name.as_str()) {
            diags.push(Diagnostic::duplicate(&c.name, c.location));
        }
        let mut actions = BTreeSet::new();
        for a in &c.actions {
            if !actions.insert(a.name.as_str()) {
                diags.push(Diagnostic::duplicate(format!("{}#{}", c.name, a.name), a.location));
            }
            let mut params = BTreeSet::new();
            for p in &a.params {
                if !params.insert(p.as_str()) {
                    diags.push(Diagnostic::duplicate(p, a.location));
                }
            }
            check_no_return(&a.body, diags);
        }
    }
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    for r in &ir.routes {
        if !seen.insert((&r.controller, &r.action)) {
            diags.push(Diagnostic {
                location: Location::default(),
                kind: super::DiagnosticKind::RouteConflict {
                    target: format!("{}#{}", r.controller, r.action),
                    message: "declared more than once".into(),
                },
            });
        }
        let declared = ir.action(&ActionId::new(&r.controller, &r.action));
        match declared {
            None => diags.push(Diagnostic::unresolved(format!("{}#{}", r.controller, r.action), Location::default())),
            Some(a) if a.method != r.method => diags.push(Diagnostic {
                location: a.location,
                kind: super::DiagnosticKind::RouteConflict {
                    target: format!("{}#{}", r.controller, r.action),
                    message: format!("route says {} but the action is {}", r.method, a.method),
                },
            }),
            Some(_) => {}
        }
    }
}

fn check_helpers(ir: &AppIR, diags: &mut Vec<Diagnostic>) {
    let mut names = BTreeSet::new();
    for h in &ir.helpers {
        if !names.insert(h.name.as_str()) {
            diags.push(Diagnostic::duplicate(&h.name, h.location));
        }
        if crate::afg::lower::UTILITIES.contains(&h.name.as_str()) {
            diags.push(Diagnostic::invalid(format!("helper `{}` shadows a builtin utility", h.name), h.location));
        }
        let mut params = BTreeSet::new();
        for p in &h.params {
            if !params.insert(p.name.as_str()) {
                diags.push(Diagnostic::duplicate(&p.name, h.location));
            }
            if let TypeAnn::Record(m) | TypeAnn::Rows(m) = &p.ty {
                if ir.model(m).is_none() {
                    diags.push(Diagnostic::unresolved(m, h.location));
                }
            }
        }
        // `return` only as the final top-level statement.
        if let Some((last, init)) = h.body.split_last() {
            check_no_return(init, diags);
            if let StmtKind::For { body, .. } = &last.kind {
                check_no_return(body, diags);
            }
            if let StmtKind::If { then_body, else_body, .. } = &last.kind {
                check_no_return(then_body, diags);
                check_no_return(else_body, diags);
            }
        }
    }
}

fn check_no_return(stmts: &[Stmt], diags: &mut Vec<Diagnostic>) {
    walk_stmts(stmts, &mut |s| {
        if let StmtKind::Return { .. } = s.kind {
            diags.push(Diagnostic::invalid("`return` is only allowed as the last statement of a helper", s.loc));
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::{parse_syntax, DiagnosticKind};

    #[test]
    fn ghost_association_target() {
        let ir = parse_syntax("model A { field ghost_id: int belongs_to ghost: Ghost }").unwrap();
        let d = validate(&ir);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::UnresolvedReference { name: "Ghost".into() });
    }

    #[test]
    fn undeclared_param() {
        let ir = parse_syntax("controller C { action a() { render(param(:q)) } }").unwrap();
        let d = validate(&ir);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::UnresolvedReference { name: ":q".into() });
    }

    #[test]
    fn belongs_to_requires_local_key() {
        let ir = parse_syntax("model U { } model B { belongs_to user: U }").unwrap();
        let d = validate(&ir);
        assert_eq!(d[0].kind, DiagnosticKind::UnresolvedReference { name: "B.user_id".into() });
    }

    #[test]
    fn explicit_id_is_duplicate() {
        let ir = parse_syntax("model A { field id: int }").unwrap();
        assert_eq!(validate(&ir)[0].kind, DiagnosticKind::DuplicateDeclaration { name: "id".into() });
    }

    #[test]
    fn return_inside_action() {
        let ir = parse_syntax("controller C { action a() { return 1 } }").unwrap();
        assert!(matches!(validate(&ir)[0].kind, DiagnosticKind::InvalidDeclaration { .. }));
    }

    #[test]
    fn validation_does_not_mutate() {
        let ir = parse_syntax("model A { field x: int } controller C { action a() { render(A.count) } }").unwrap();
        let before = ir.clone();
        assert!(validate(&ir).is_empty());
        assert_eq!(ir, before);
    }
}
