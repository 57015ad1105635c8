//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use common::gen::random_program;
use common::oracle::*;
use common::reference::{random_descriptor, random_store, reference_select, RefResult, ENGINE_SCHEMA};
use ormlens_core::afg::dataflow::used_data;
use ormlens_core::afg::lower::lower_action;
use ormlens_core::afg::{query_sinks, value_sources, Aggregate, NodeId, Slot};
use ormlens_core::detectors::{classify_boundedness, loop_carried_edges, BoundednessLabel, ColumnSourceLabel};
use ormlens_core::rewrite::{canonical_sql, shared_view_plan, Bindings, RewriteKind};
use ormlens_core::sim::{
    cache_decisions, execute_query, execute_select, generate_data, generate_data_with, prefetch_decisions,
    prefetch_stats, Domains, SessionConfig, SimConfig, Simulator, SplitMix64, Views,
};
use ormlens_core::*;

fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}.rlite", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn analyze(name: &str) -> Analysis {
    analyze_source(&fixture(name), &DetectorKind::ALL).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Run `body`, print one PASS/FAIL line and fail the test on failure.
fn criterion(name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("[PASS] {name}"),
        Err(msg) => {
            println!("[FAIL] {name}: {msg}");
            panic!("{name}: {msg}");
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

#[test]
fn c01_fix1_unused_eager_loads() {
    criterion("FIX1 unused eager loads: projs and tags unused, preds used, under 1 s", || {
        let start = Instant::now();
        let an = analyze("fix1");
        let got: BTreeSet<(String, bool)> = an
            .findings
            .iter()
            .filter_map(|f| match &f.detail {
                FindingDetail::UnusedEagerLoad { eager_load, used, .. } => Some((eager_load.clone(), *used)),
                _ => None,
            })
            .collect();
        let elapsed = start.elapsed();
        let want =
            BTreeSet::from([("projs".to_string(), false), ("tags".to_string(), false), ("preds".to_string(), true)]);
        ensure(got == want, || format!("got {got:?}"))?;
        ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))
    });
}

/// The combined query for the member/issue example, verbatim.
const COMBINED_LISTING: &str = "SELECT * FROM issues INNER JOIN members ON members.group_id = 1 AND issues.creator_id = members.id AND issues.is_public = 1";

#[test]
fn c02_fix2_query_only_sink_and_combine() {
    criterion("FIX2 member query only feeds the issue query; combined SQL matches the listing", || {
        let an = analyze("fix2");
        let afg = an.graph.afgs.values().next().ok_or("no action")?;
        let root_of = |n: NodeId| afg.node(n).descriptor().map(|d| d.root_model.clone()).unwrap_or_default();
        let sinks: Vec<(NodeId, Vec<NodeId>)> = an
            .findings
            .iter()
            .filter_map(|f| match &f.detail {
                FindingDetail::QueryOnlySink { query, consumer_queries } => Some((*query, consumer_queries.clone())),
                _ => None,
            })
            .collect();
        ensure(sinks.len() == 1, || format!("sink findings {sinks:?}"))?;
        let (q1, consumers) = &sinks[0];
        ensure(root_of(*q1) == "Member", || format!("flagged {}", root_of(*q1)))?;
        ensure(consumers.len() == 1 && root_of(consumers[0]) == "Issue", || format!("consumers {consumers:?}"))?;
        let combined: Vec<&str> = an
            .rewrites
            .suggestions
            .iter()
            .filter(|s| s.kind == RewriteKind::CombineQueries)
            .flat_map(|s| s.suggested_sql.iter().map(|q| q.text.as_str()))
            .collect();
        ensure(combined.len() == 1, || format!("combined {combined:?}"))?;
        let (got, want) = (canonical_sql(combined[0]), canonical_sql(COMBINED_LISTING));
        ensure(got == want, || format!("\n got  {got}\n want {want}\n raw  {}", combined[0]))
    });
}

#[test]
fn c03_fix4_shared_view_equivalence() {
    criterion("FIX4 COUNT and JOIN share a prefix; the shared view reproduces both on 100 random stores", || {
        let an = analyze("fix4");
        let afg = an.graph.afgs.values().next().ok_or("no action")?;
        let groups: Vec<(NodeId, Vec<NodeId>)> = an
            .findings
            .iter()
            .filter_map(|f| match &f.detail {
                FindingDetail::SharedSubexpression { base_query, extended_queries } => {
                    Some((*base_query, extended_queries.clone()))
                }
                _ => None,
            })
            .collect();
        ensure(groups.len() == 1, || format!("groups {groups:?}"))?;
        let (base, members) = &groups[0];
        let descs: Vec<_> = members.iter().map(|m| afg.node(*m).descriptor().cloned().expect("query")).collect();
        let has_count = descs.iter().any(|d| matches!(d.aggregate, Some(Aggregate::Count) | Some(Aggregate::Any)));
        let has_join = descs.iter().any(|d| d.aggregate.is_none() && d.eager_loads.len() == 2);
        ensure(members.len() == 2 && has_count && has_join, || format!("members {descs:#?}"))?;
        let view =
            an.rewrites.suggestions.iter().find(|s| s.kind == RewriteKind::SharedView).ok_or("no shared view")?;
        ensure(view.suggested_sql.len() == 3, || format!("{} statements", view.suggested_sql.len()))?;

        let base_desc = afg.node(*base).descriptor().cloned().expect("base query");
        let member_refs: Vec<_> = descs.iter().collect();
        let mut rng = SplitMix64::new(4);
        let mut mismatches = Vec::new();
        for round in 0..100 {
            let rows = 1 + rng.index(500);
            let store = generate_data_with(&an.ir, rng.next_u64(), rows, &Domains::new());
            let mut b = Bindings::default();
            b.slots.insert(Slot::Pred(0), Value::Int(rng.range_i64(0, 9)));
            b.slots.insert(Slot::Pred(1), Value::Int(rng.range_i64(0, 9)));
            let mb = vec![b.clone(); descs.len()];
            let plan = shared_view_plan(&an.ir, *base, &base_desc, &member_refs, Some(&b), Some(&mb))
                .map_err(|e| e.to_string())?;
            let views = Views::from([(plan.name.clone(), plan.view.clone())]);
            for (d, p) in descs.iter().zip(&plan.members) {
                let original = execute_query(&store, &an.ir, d, &b).map_err(|e| e.to_string())?;
                let shared = execute_select(&store, &views, p).map_err(|e| e.to_string())?;
                if original.count != shared.count || original.origin_multiset() != shared.origin_multiset() {
                    mismatches.push(round);
                }
            }
        }
        ensure(mismatches.is_empty(), || format!("{} mismatches in rounds {mismatches:?}", mismatches.len()))
    });
}

#[test]
fn c04_boundedness_table() {
    use BoundednessLabel::*;
    let table: [(&str, BoundednessLabel); 12] = [
        ("Todo.count", BoundedSingleValue),
        ("Todo.where(state == \"a\").any", BoundedSingleValue),
        ("Todo.where(state == \"a\").limit(5).count", BoundedSingleValue),
        ("Todo.find(param(:n))", BoundedSingleRecord),
        ("Todo.where(id == 3)", BoundedSingleRecord),
        ("Todo.limit(10)", BoundedLimited),
        ("Todo.limit(param(:n))", BoundedLimited),
        ("Todo.where(state == \"a\").order(state).limit(5).offset(10)", BoundedLimited),
        ("Todo.offset(param(:n))", Unbounded),
        ("Todo.where(state == \"a\")", Unbounded),
        ("Todo.group(state)", Unbounded),
        ("Todo.where(id > 3)", Unbounded),
    ];
    criterion("Boundedness: 12 hand-labeled queries classified correctly", || {
        let mut wrong = Vec::new();
        for (chain, want) in table {
            let src = format!(
                "model Todo {{ field state: string(16) }}\ncontroller T {{ action a(n) {{ let r = {chain}\n render(r) }} }}"
            );
            let an = analyze_source(&src, &DetectorKind::ALL).map_err(|e| format!("{chain}: {e}"))?;
            let afg = an.graph.afgs.values().next().ok_or("no action")?;
            let d = afg.query_nodes().next().and_then(|n| n.descriptor()).ok_or("no query")?;
            let got = classify_boundedness(d);
            if got != want {
                wrong.push(format!("{chain}: {got:?} (want {want:?})"));
            }
        }
        ensure(wrong.is_empty(), || wrong.join("; "))
    });
}

#[test]
fn c05_fix5_fix6_column_sources() {
    criterion(
        "FIX5/FIX6 column sources: todos.state onlyConst with its domain, projects.status onlyOtherQuery",
        || {
            let label = |an: &Analysis, t: &str, c: &str| {
                an.findings.iter().find_map(|f| match &f.detail {
                    FindingDetail::ColumnSource { table, column, label, domain, .. } if table == t && column == c => {
                        Some((*label, domain.clone()))
                    }
                    _ => None,
                })
            };
            let (l5, domain) = label(&analyze("fix5"), "todos", "state").ok_or("no todos.state finding")?;
            let domain: BTreeSet<Value> = domain.into_iter().collect();
            let want: BTreeSet<Value> =
                ["active", "complete", "deferred"].into_iter().map(|s| Value::Str(s.into())).collect();
            ensure(l5 == ColumnSourceLabel::OnlyConst && domain == want, || format!("todos.state {l5:?} {domain:?}"))?;
            let (l6, _) = label(&analyze("fix6"), "projects", "status").ok_or("no projects.status finding")?;
            ensure(l6 == ColumnSourceLabel::OnlyOtherQuery, || format!("projects.status {l6:?}"))
        },
    );
}

/// Disagreement counts per analysis.
#[derive(Default, Debug)]
struct Tally {
    instances: usize,
    data_edges: usize,
    used_columns: usize,
    sinks: usize,
    sources: usize,
    loop_carried: usize,
    cache: usize,
    checked: BTreeMap<&'static str, usize>,
}

fn check_instance(src: &str, seed: u64, t: &mut Tally, failures: &mut Vec<String>) {
    let an = analyze_source(src, &DetectorKind::ALL).expect("generated programs are valid");
    let afg = an.graph.afgs.values().next().expect("one action");
    t.instances += 1;

    let oracle_edges = path_data_edges(afg);
    let edges: BTreeSet<DataEdge> =
        afg.data_edges().map(|e| (e.from, e.to, e.var.clone().unwrap_or_default())).collect();
    *t.checked.entry("data edges").or_default() += 1;
    if edges != oracle_edges {
        t.data_edges += 1;
        failures.push(format!("seed {seed}: data edges {edges:?} vs {oracle_edges:?}"));
    }
    for q in afg.query_nodes() {
        *t.checked.entry("used columns").or_default() += 1;
        let (got, want) = (used_data(afg, &an.ir, q.id), path_used_data(afg, &an.ir, q.id));
        if got != want {
            t.used_columns += 1;
            failures.push(format!("seed {seed}: used data of {} {got:?} vs {want:?}", q.id));
        }
        *t.checked.entry("query sinks").or_default() += 1;
        let (got, want) = (query_sinks(afg, q.id), path_query_sinks(afg, q.id));
        if got != want {
            t.sinks += 1;
            failures.push(format!("seed {seed}: sinks of {} {got:?} vs {want:?}", q.id));
        }
    }
    for n in &afg.nodes {
        *t.checked.entry("value sources").or_default() += 1;
        let (got, want) = (value_sources(afg, n.id), closure_value_sources(afg, &oracle_edges, n.id));
        if got != want {
            t.sources += 1;
            failures.push(format!("seed {seed}: sources of {} {got:?} vs {want:?}", n.id));
        }
    }
    for i in 0..afg.loops.len() {
        *t.checked.entry("loop carried").or_default() += 1;
        let (got, want) = (loop_carried_edges(afg, i), path_loop_carried(afg, i));
        if got != want {
            t.loop_carried += 1;
            failures.push(format!("seed {seed}: loop {i} carried {got:?} vs {want:?}"));
        }
    }

    let mut rng = SplitMix64::new(seed ^ 0x5eed);
    let store = generate_data(&an.ir, rng.next_u64(), 1 + rng.index(200));
    let sim = Simulator::new(&an.ir, &an.graph).expect("lowering");
    let cfg = SessionConfig { length: 1 + rng.index(9), ..SessionConfig::new(rng.next_u64()) };
    let log = sim.run(&store, &cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{src}"));
    let got: Vec<(u64, bool, bool, bool)> =
        cache_decisions(&log).into_iter().map(|d| (d.seq, d.hit, d.syntactic_equiv, d.differing)).collect();
    let want = rescan_cache_decisions(&log);
    *t.checked.entry("cache decisions").or_default() += got.len();
    if got != want {
        t.cache += 1;
        failures.push(format!("seed {seed}: cache {got:?} vs {want:?}"));
    }
}

#[test]
fn c06_oracle_equivalence() {
    criterion(
        "Oracle equivalence on >= 250 random programs with >= 100 loops (AFG <= 12 nodes), 0 disagreements, under 60 s",
        || {
            let start = Instant::now();
            let mut t = Tally::default();
            let mut failures = Vec::new();
            let mut seed = 0u64;
            while t.instances < 250 || t.checked.get("loop carried").copied().unwrap_or(0) < 100 {
                let src = random_program(seed);
                let small = analyze_source(&src, &[])
                    .ok()
                    .is_some_and(|an| an.graph.afgs.values().all(|g| g.nodes.len() <= 12));
                if small {
                    check_instance(&src, seed, &mut t, &mut failures);
                }
                seed += 1;
            }
            let elapsed = start.elapsed();
            println!("  checked {:?} over {} instances in {elapsed:?}", t.checked, t.instances);
            failures.truncate(5);
            ensure(t.data_edges + t.used_columns + t.sinks + t.sources + t.loop_carried + t.cache == 0, || {
                format!("{t:?}\n{}", failures.join("\n"))
            })?;
            ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))
        },
    );
}

fn result_rows(rs: &ormlens_core::sim::ResultSet) -> RefResult {
    match rs.count {
        Some(n) => RefResult::Count(n),
        None => RefResult::Rows(
            rs.rows.iter().map(|row| row.iter().map(|t| (t.origin[0].clone(), t.values.clone())).collect()).collect(),
        ),
    }
}

#[test]
fn c07_engine_matches_reference() {
    criterion("Engine matches the nested-loop reference on 500 random (descriptor, store) pairs", || {
        let mut rng = SplitMix64::new(17);
        let mut wrong = Vec::new();
        for i in 0..500 {
            let (ir, desc, b) = random_descriptor(ENGINE_SCHEMA, &mut rng);
            let store = random_store(&ir, &mut rng, 200);
            let got = execute_query(&store, &ir, &desc, &b).map_err(|e| format!("pair {i}: {e}"))?;
            let want = reference_select(&ir, &store, &desc, &b);
            if result_rows(&got) != want {
                wrong.push(i);
            }
        }
        ensure(wrong.is_empty(), || format!("{} disagreements: {wrong:?}", wrong.len()))
    });
}

#[test]
fn c08_scalability_trend() {
    criterion("Scalability: unbounded results grow and bounded ones stay constant at 1x, 10x, 100x rows", || {
        let mut inconsistent = Vec::new();
        let mut checked = 0;
        for i in 1..=7 {
            let an = analyze(&format!("fix{i}"));
            let sim = Simulator::new(&an.ir, &an.graph).map_err(|e| e.to_string())?;
            let mut sizes: BTreeMap<(ActionId, NodeId), Vec<usize>> = BTreeMap::new();
            for rows in [100usize, 1_000, 10_000] {
                let store = generate_data(&an.ir, 7, rows);
                for (a, afg) in &an.graph.afgs {
                    let params = lower_action(&an.ir, a)
                        .map_err(|_| format!("{a}: lowering"))?
                        .params
                        .iter()
                        .map(|p| (p.clone(), Value::Int(1)))
                        .collect();
                    let cfg =
                        SessionConfig { seed: 11, length: 1, start_action: Some(a.clone()), start_params: params };
                    let log = sim.run(&store, &cfg).map_err(|e| e.to_string())?;
                    for q in afg.issued_queries().filter(|q| q.descriptor().is_some_and(|d| d.is_read())) {
                        let largest = log.entries.iter().filter(|e| e.node == q.id).map(|e| e.result_rows).max();
                        sizes.entry((a.clone(), q.id)).or_default().push(largest.unwrap_or(0));
                    }
                }
            }
            for ((a, n), s) in sizes {
                let label = classify_boundedness(an.graph.afgs[&a].node(n).descriptor().expect("query"));
                checked += 1;
                let ok = if label.is_bounded() { s[0] == s[1] && s[1] == s[2] } else { s[0] < s[1] && s[1] < s[2] };
                if !ok {
                    inconsistent.push(format!("fix{i} {a} {n} {label:?} {s:?}"));
                }
            }
        }
        println!("  {checked} read queries checked");
        ensure(checked > 0 && inconsistent.is_empty(), || inconsistent.join("; "))
    });
}

fn full_run() -> (String, String, String) {
    let cfg = SimConfig { seed: 42, sessions: 20, ..SimConfig::default() };
    let mut reports = Vec::new();
    let mut logs = String::new();
    for i in 1..=7 {
        let an = analyze(&format!("fix{i}"));
        let sim = an.simulate(&cfg).expect("simulation");
        logs.push_str(&sim.to_ndjson());
        reports.push(an.report(&format!("fix{i}"), Some(&sim)));
    }
    let doc = ReportDocument::new(reports);
    (emit_report(&doc, Format::Json, false), emit_report(&doc, Format::Csv, false), logs)
}

#[test]
fn c09_determinism() {
    criterion("Determinism: analyze + simulate with fixed seeds give byte-identical reports", || {
        let (a, b) = (full_run(), full_run());
        ensure(a.0 == b.0, || "JSON reports differ".into())?;
        ensure(a.1 == b.1, || "CSV reports differ".into())?;
        ensure(a.2 == b.2, || "session logs differ".into())
    });
}

#[test]
fn c10_fix7_pagination_prefetch() {
    criterion("FIX7 pagination: OFFSET 0 then OFFSET 40; step 2 prefetchable and same template", || {
        let an = analyze("fix7");
        let store = generate_data(&an.ir, 5, 100);
        let sim = Simulator::new(&an.ir, &an.graph).map_err(|e| e.to_string())?;
        let cfg = SessionConfig {
            seed: 3,
            length: 2,
            start_action: Some(ActionId::new("Posts", "index")),
            start_params: BTreeMap::from([("page_id".to_string(), Value::Int(0))]),
        };
        let log = sim.run(&store, &cfg).map_err(|e| e.to_string())?;
        let reads: Vec<_> = log.entries.iter().filter(|e| e.is_read()).collect();
        ensure(reads.len() == 2, || format!("{} reads", reads.len()))?;
        ensure(reads[0].step == 0 && reads[0].sql.ends_with("OFFSET 0"), || reads[0].sql.clone())?;
        ensure(reads[1].step == 1 && reads[1].sql.ends_with("OFFSET 40"), || reads[1].sql.clone())?;
        let decisions = prefetch_decisions(&log, &an.graph);
        ensure(decisions == vec![(reads[1].seq, true, true)], || format!("{decisions:?}"))?;
        let s = prefetch_stats(&log, &an.graph);
        ensure(s.prefetchable_fraction == 1.0 && s.same_template_fraction == 1.0, || format!("{s:?}"))
    });
}
