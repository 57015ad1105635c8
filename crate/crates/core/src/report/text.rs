//! Observation-box text rendering.

use std::fmt::Write;

use super::{AppSummary, Metric, ReportDocument};
use crate::detectors::ColumnSourceLabel;

const WIDTH: usize = 72;

/// `ORMLENS_COLOR=1` turns on ANSI colors; anything else leaves them off.
pub fn color_from_env() -> bool {
    std::env::var("ORMLENS_COLOR").is_ok_and(|v| v.trim() == "1")
}

struct Painter {
    color: bool,
}

impl Painter {
    fn bold(&self, s: &str) -> String {
        if self.color {
            format!("\x1b[1m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    }

    fn accent(&self, s: &str) -> String {
        if self.color {
            format!("\x1b[33m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn metric_line(m: &Metric, what: &str) -> String {
    if m.terms == 0 {
        format!("no {what} to measure")
    } else {
        format!(
            "{} of {what} ({} of {} pooled, mean over {} actions)",
            pct(m.value),
            m.numerator,
            m.denominator,
            m.terms
        )
    }
}

fn boxed(out: &mut String, p: &Painter, title: &str, lines: &[String]) {
    let head = format!("+-- {title} ");
    let pad = WIDTH.saturating_sub(head.chars().count());
    let _ = writeln!(out, "{}{}", p.bold(&head), "-".repeat(pad));
    for l in lines {
        let _ = writeln!(out, "| {l}");
    }
    let _ = writeln!(out, "+{}", "-".repeat(WIDTH - 1));
}

fn render_app(out: &mut String, p: &Painter, s: &AppSummary, suggestions: usize, inapplicable: usize) {
    let a = &s.averages;
    let _ = writeln!(out, "{}", p.bold(&format!("== {} ({} actions) ==", s.application, s.actions.len())));
    let observations: Vec<(&str, Vec<String>)> = vec![
        (
            "Observation: queries in loops",
            vec![
                metric_line(&a.query_in_loop, "queries issued inside loops"),
                metric_line(&a.loop_carried, "loops with a loop-carried dependency"),
            ],
        ),
        (
            "Observation: unused data",
            vec![
                metric_line(&a.unused_columns, "retrieved columns unused"),
                format!(
                    "{:.1} unused bytes per retrieved row set, mean over actions; {} in total",
                    a.unused_bytes.value, a.unused_bytes.numerator
                ),
                metric_line(&a.unused_eager_loads, "eager loads unused"),
            ],
        ),
        (
            "Observation: redundant queries",
            vec![
                metric_line(&a.query_only_sinks, "reads only feeding other queries"),
                metric_line(&a.shared_subexpressions, "queries sharing a subexpression"),
            ],
        ),
        (
            "Observation: scalability",
            vec![
                metric_line(&a.bounded, "reads bounded"),
                format!(
                    "single value {}, single record {}, limited {}, unbounded {}",
                    pct(a.bounded_single_value.value),
                    pct(a.bounded_single_record.value),
                    pct(a.bounded_limited.value),
                    pct(a.unbounded.value)
                ),
            ],
        ),
        ("Observation: control flow", vec![metric_line(&a.db_sensitive_branches, "branches DB-sensitive")]),
        (
            "Observation: prefetching",
            vec![
                metric_line(&a.prefetchable, "next-action queries prefetchable"),
                metric_line(&a.same_template, "next-action queries sharing a template"),
            ],
        ),
    ];
    for (title, lines) in observations {
        boxed(out, p, title, &lines);
    }
    let cs = &s.column_sources;
    let mut lines = Vec::new();
    for l in [
        ColumnSourceLabel::OnlyConst,
        ColumnSourceLabel::OnlyOtherQuery,
        ColumnSourceLabel::HasInput,
        ColumnSourceLabel::OtherWithoutInput,
        ColumnSourceLabel::NeverWritten,
    ] {
        let name = serde_json::to_value(l).expect("label serializes");
        let c = cs.counts.get(&l).copied().unwrap_or(0);
        let f = cs.fractions.get(&l).map(|f| format!(" ({})", pct(*f))).unwrap_or_default();
        lines.push(format!("{}: {c}{f}", name.as_str().unwrap_or_default()));
    }
    boxed(out, p, "Observation: column data sources", &lines);
    if let Some(sim) = &s.simulation {
        let m = &sim.means;
        boxed(
            out,
            p,
            "Observation: caching and prefetching (simulated)",
            &[
                format!(
                    "{} sessions of {} pages, seed {}, {} rows per model",
                    sim.sessions, sim.config.session_length, sim.config.seed, sim.config.rows_per_model
                ),
                format!("hit reads {}", pct(m.hit_fraction)),
                format!(
                    "syntactically equivalent reads {}, equivalent with differing results {}",
                    pct(m.syntactic_equiv_fraction),
                    pct(m.equiv_differing_results_fraction)
                ),
                format!(
                    "prefetchable {}, same template {}",
                    pct(m.prefetchable_fraction),
                    pct(m.same_template_fraction)
                ),
            ],
        );
    }
    let _ = writeln!(
        out,
        "{}",
        p.accent(&format!(
            "Optimization: {suggestions} rewrite suggestions, {inapplicable} findings without a rewrite"
        ))
    );
    out.push('\n');
}

pub fn render_text(doc: &ReportDocument, color: bool) -> String {
    let p = Painter { color };
    let mut out = String::new();
    let _ = writeln!(out, "ormlens report v{}, {} applications\n", doc.report_version, doc.applications.len());
    for app in &doc.applications {
        render_app(&mut out, &p, &app.summary, app.suggestions.len(), app.inapplicable.len());
    }
    out
}
