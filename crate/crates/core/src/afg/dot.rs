use std::fmt::Write;

use super::*;

fn shape(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Entry | NodeKind::Exit => "circle",
        NodeKind::Query => "box",
        NodeKind::Branch => "diamond",
        NodeKind::LoopHead | NodeKind::LoopEnd => "hexagon",
        NodeKind::Render => "note",
        NodeKind::Link | NodeKind::Form => "cds",
        _ => "ellipse",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering of one AFG. Data edges are dashed and labeled with
/// the variable they carry.
pub fn to_dot(afg: &Afg) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape(&afg.action.to_string()));
    for n in &afg.nodes {
        let detail = match &n.payload {
            Payload::Query { descriptor, deferred, .. } => {
                format!("{}{}", descriptor.root_model, if *deferred { " (deferred)" } else { "" })
            }
            Payload::Target { target, .. } => target.to_string(),
            Payload::Var { name }
            | Payload::Global { name }
            | Payload::Param { name }
            | Payload::Loop { var: name } => name.clone(),
            Payload::FieldWrite { var, column, .. } => format!("{var}.{column}"),
            Payload::NoOp { reason } => reason.clone(),
            Payload::None => String::new(),
        };
        let _ = writeln!(
            out,
            "  {} [shape={}, label=\"{:?} {}\\n{}\"];",
            n.id,
            shape(n.kind),
            n.kind,
            escape(&detail),
            n.location
        );
    }
    for e in &afg.edges {
        match e.kind {
            EdgeKind::Data => {
                let _ = writeln!(
                    out,
                    "  {} -> {} [style=dashed, label=\"{}\"];",
                    e.from,
                    e.to,
                    escape(e.var.as_deref().unwrap_or_default())
                );
            }
            _ => {
                let _ = writeln!(out, "  {} -> {};", e.from, e.to);
            }
        }
    }
    out.push_str("}\n");
    out
}
