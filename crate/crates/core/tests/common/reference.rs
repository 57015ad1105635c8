//! Nested-loop reference evaluator for select descriptors, plus random
//! descriptors and stores to feed it.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use ormlens_core::afg::{Aggregate, PredOp, QueryDescriptor, Relation, Slot};
use ormlens_core::app_model::AssocKind;
use ormlens_core::rewrite::Bindings;
use ormlens_core::sim::{RowIdent, SplitMix64, TableStore};
use ormlens_core::{analyze_source, AppIR, DetectorKind, Value};

pub const ENGINE_SCHEMA: &str = "
model Item {
  field x: int
  field y: int
  field s: string(4)
  field box_id: int
  belongs_to box: Box key box_id
}

model Box {
  field x: int
  field label: string(4)
  has_many items: Item key box_id
}
";

#[derive(Debug, Clone, PartialEq)]
pub enum RefResult {
    Count(i64),
    Rows(Vec<Vec<(RowIdent, BTreeMap<String, Value>)>>),
}

fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn holds(op: PredOp, l: &Value, r: &Value) -> bool {
    match op {
        PredOp::Eq => compare(l, r) == Some(Ordering::Equal),
        PredOp::Ne => matches!(compare(l, r), Some(Ordering::Less | Ordering::Greater)),
        PredOp::Lt => compare(l, r) == Some(Ordering::Less),
        PredOp::Gt => compare(l, r) == Some(Ordering::Greater),
        PredOp::In => match r {
            Value::List(items) => items.iter().any(|v| compare(l, v) == Some(Ordering::Equal)),
            other => compare(l, other) == Some(Ordering::Equal),
        },
    }
}

fn slot_value(desc: &QueryDescriptor, slot: Slot, b: &Bindings) -> Value {
    let expr = match slot {
        Slot::Pred(i) => &desc.predicates[i].value,
        Slot::Limit => desc.limit.as_ref().expect("limit"),
        Slot::Offset => desc.offset.as_ref().expect("offset"),
    };
    expr.constant().cloned().unwrap_or_else(|| b.slots[&slot].clone())
}

fn count_of(v: &Value) -> usize {
    match v {
        Value::Int(n) if *n > 0 => *n as usize,
        _ => 0,
    }
}

type Part = (RowIdent, BTreeMap<String, Value>);

/// Evaluate `desc` by enumerating every combination of root and eager-load
/// rows, then filtering, grouping, sorting and slicing the result.
pub fn reference_select(ir: &AppIR, store: &TableStore, desc: &QueryDescriptor, b: &Bindings) -> RefResult {
    let root = ir.model(&desc.root_model).expect("root model");
    let table_rows = |table: &str| -> Vec<Part> {
        store.tables[table]
            .rows
            .iter()
            .map(|r| (RowIdent { table: table.to_string(), id: r.id }, r.values.clone()))
            .collect()
    };
    let mut combos: Vec<Vec<Part>> = table_rows(&root.table).into_iter().map(|p| vec![p]).collect();
    for a in &desc.eager_loads {
        let assoc = root.association(a).expect("association");
        let target = ir.model(&assoc.target).expect("target");
        let (mine, theirs) = match assoc.kind {
            AssocKind::BelongsTo => (assoc.foreign_key.clone(), "id".to_string()),
            AssocKind::HasOne | AssocKind::HasMany => ("id".to_string(), assoc.foreign_key.clone()),
        };
        let inner = table_rows(&target.table);
        let mut next = Vec::new();
        for c in &combos {
            let key = &c[0].1[&mine];
            for t in &inner {
                if compare(key, &t.1[&theirs]) == Some(Ordering::Equal) {
                    let mut row = c.clone();
                    row.push(t.clone());
                    next.push(row);
                }
            }
        }
        combos = next;
    }
    let part_of = |rel: &Relation| match rel {
        Relation::Root => 0,
        Relation::Assoc(a) => 1 + desc.eager_loads.iter().position(|x| x == a).expect("loaded"),
    };
    for (i, p) in desc.predicates.iter().enumerate() {
        let v = slot_value(desc, Slot::Pred(i), b);
        let at = part_of(&p.column.relation);
        combos.retain(|c| holds(p.op, c[at].1.get(&p.column.column).unwrap_or(&Value::Null), &v));
    }
    if let Some(g) = &desc.group_by {
        let at = part_of(&g.relation);
        let mut kept: Vec<Vec<Part>> = Vec::new();
        for c in combos {
            let k = c[at].1.get(&g.column).cloned().unwrap_or(Value::Null);
            if !kept.iter().any(|x| x[at].1.get(&g.column).cloned().unwrap_or(Value::Null) == k) {
                kept.push(c);
            }
        }
        combos = kept;
    }
    // Insertion sort: stable by construction.
    let key = |c: &Vec<Part>| {
        let ord =
            desc.order_by.as_ref().map(|o| c[part_of(&o.relation)].1.get(&o.column).cloned().unwrap_or(Value::Null));
        (ord, c[0].0.id)
    };
    let mut sorted: Vec<Vec<Part>> = Vec::new();
    for c in combos {
        let k = key(&c);
        let at = sorted.iter().position(|x| key(x) > k).unwrap_or(sorted.len());
        sorted.insert(at, c);
    }
    if desc.offset.is_some() {
        let n = count_of(&slot_value(desc, Slot::Offset, b)).min(sorted.len());
        sorted = sorted.split_off(n);
    }
    if desc.limit.is_some() {
        sorted.truncate(count_of(&slot_value(desc, Slot::Limit, b)));
    }
    if matches!(desc.aggregate, Some(Aggregate::Count) | Some(Aggregate::Any)) {
        return RefResult::Count(sorted.len() as i64);
    }
    if desc.explicit_projection {
        for c in &mut sorted {
            for (i, part) in c.iter_mut().enumerate() {
                let rel = if i == 0 { Relation::Root } else { Relation::Assoc(desc.eager_loads[i - 1].clone()) };
                part.1.retain(|col, _| desc.projection.iter().any(|p| p.relation == rel && &p.column == col));
            }
        }
    }
    RefResult::Rows(sorted)
}

fn random_operand(rng: &mut SplitMix64, string_col: bool) -> Value {
    match rng.below(10) {
        0 => Value::Null,
        1 if !string_col => Value::Str("a".into()),
        _ if string_col => Value::Str(["a", "b", "c"][rng.index(3)].into()),
        _ => Value::Int(rng.range_i64(0, 9)),
    }
}

/// A random descriptor built through the front end, with bindings for
/// every non-constant slot.
pub fn random_descriptor(ir_src: &str, rng: &mut SplitMix64) -> (AppIR, QueryDescriptor, Bindings) {
    let from_box = rng.below(3) == 0;
    let (model, cols, assoc, acols) = if from_box {
        ("Box", vec!["x", "label", "id"], "items", vec!["x", "y", "s", "box_id"])
    } else {
        ("Item", vec!["x", "y", "s", "box_id", "id"], "box", vec!["x", "label"])
    };
    let mut chain = format!("{model}.all");
    let include = rng.below(2) == 0;
    if include {
        chain.push_str(&format!(".includes({assoc})"));
    }
    let mut params = Vec::new();
    for _ in 0..rng.below(4) {
        let (col, is_str) = if include && rng.below(3) == 0 {
            let c = acols[rng.index(acols.len())];
            (format!("{assoc}.{c}"), matches!(c, "s" | "label"))
        } else {
            let c = cols[rng.index(cols.len())];
            (c.to_string(), matches!(c, "s" | "label"))
        };
        let op = ["==", "!=", "<", ">", "in"][rng.index(5)];
        let rhs = match (op, rng.below(3)) {
            ("in", 0) => "[1, 2, 3]".to_string(),
            ("in", 1) if is_str => "[\"a\", \"b\"]".to_string(),
            (_, 0) if !is_str => format!("{}", rng.range_i64(0, 9)),
            (_, 0) => "\"b\"".to_string(),
            _ => {
                params.push(format!("p{}", params.len()));
                format!("param(:{})", params.last().expect("pushed"))
            }
        };
        chain.push_str(&format!(".where({col} {op} {rhs})"));
    }
    let ord_col = |rng: &mut SplitMix64| {
        if include && rng.below(3) == 0 {
            format!("{assoc}.{}", acols[rng.index(acols.len())])
        } else {
            cols[rng.index(cols.len())].to_string()
        }
    };
    if rng.below(3) == 0 {
        chain.push_str(&format!(".group({})", ord_col(rng)));
    }
    if rng.below(2) == 0 {
        chain.push_str(&format!(".order({})", ord_col(rng)));
    }
    if rng.below(3) == 0 {
        params.push("lo".into());
        chain.push_str(".offset(param(:lo))");
    }
    if rng.below(3) == 0 {
        if rng.below(2) == 0 {
            params.push("li".into());
            chain.push_str(".limit(param(:li))");
        } else {
            chain.push_str(&format!(".limit({})", rng.range_i64(0, 20)));
        }
    }
    match rng.below(8) {
        0 => chain.push_str(".count"),
        1 => chain.push_str(".any"),
        2 => chain.push_str(&format!(".select({})", cols[..2].join(", "))),
        _ => {}
    }
    let src = format!(
        "{ir_src}\ncontroller Q {{\n  action run({}) {{\n    let r = {chain}\n    render(r)\n  }}\n}}\n",
        params.join(", ")
    );
    let an = analyze_source(&src, &[DetectorKind::Boundedness]).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let desc = an
        .graph
        .afgs
        .values()
        .next()
        .expect("action")
        .query_nodes()
        .next()
        .expect("query")
        .descriptor()
        .cloned()
        .expect("descriptor");
    let mut b = Bindings::default();
    for (slot, v) in desc.slots() {
        if v.constant().is_none() {
            let value = match slot {
                Slot::Limit | Slot::Offset => Value::Int(rng.range_i64(0, 15)),
                Slot::Pred(i) => {
                    let c = &desc.predicates[i].column.column;
                    random_operand(rng, matches!(c.as_str(), "s" | "label"))
                }
            };
            b.slots.insert(slot, value);
        }
    }
    (an.ir, desc, b)
}

/// A store with up to `max_rows` rows per table, NULLs and dangling keys
/// included.
pub fn random_store(ir: &AppIR, rng: &mut SplitMix64, max_rows: usize) -> TableStore {
    let mut store = TableStore::empty(ir);
    let boxes = rng.index(max_rows + 1);
    let items = rng.index(max_rows + 1);
    let int =
        |rng: &mut SplitMix64, hi: i64| if rng.below(10) == 0 { Value::Null } else { Value::Int(rng.range_i64(0, hi)) };
    let text = |rng: &mut SplitMix64| {
        if rng.below(10) == 0 {
            Value::Null
        } else {
            Value::Str(["a", "b", "c"][rng.index(3)].into())
        }
    };
    for _ in 0..boxes {
        let row = BTreeMap::from([("x".to_string(), int(rng, 9)), ("label".to_string(), text(rng))]);
        store.tables.get_mut("boxes").expect("boxes").insert(row);
    }
    for _ in 0..items {
        let row = BTreeMap::from([
            ("x".to_string(), int(rng, 9)),
            ("y".to_string(), int(rng, 9)),
            ("s".to_string(), text(rng)),
            ("box_id".to_string(), int(rng, boxes as i64 + 2)),
        ]);
        store.tables.get_mut("items").expect("items").insert(row);
    }
    store
}
