//! In-memory tables and the synthetic data generator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use crate::app_model::{AppIR, AssocKind, FieldKind, ModelDecl};
use crate::value::Value;

/// Logical "now" used by generated datetimes and the `now()` utility.
pub const NOW: i64 = 1_700_000_000;
/// Generated datetimes fall in `[NOW - WINDOW, NOW]`.
pub const DATETIME_WINDOW: i64 = 60 * 86_400;
/// Length of generated `text` values.
pub const TEXT_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: i64,
    /// Every column, `id` included.
    pub values: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    /// Sorted by id.
    pub rows: Vec<Row>,
    pub next_id: i64,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new(), next_id: 1 }
    }

    pub fn get(&self, id: i64) -> Option<&Row> {
        self.rows.binary_search_by_key(&id, |r| r.id).ok().map(|i| &self.rows[i])
    }

    pub fn get_mut(&mut self, id: i64) -> Option<&mut Row> {
        self.rows.binary_search_by_key(&id, |r| r.id).ok().map(move |i| &mut self.rows[i])
    }

    /// Append a row with a fresh id; unspecified columns are NULL.
    pub fn insert(&mut self, mut values: BTreeMap<String, Value>) -> i64 {
        let id = self.next_id;
        self.next_id += 1;
        for c in &self.columns {
            values.entry(c.clone()).or_insert(Value::Null);
        }
        values.insert("id".into(), Value::Int(id));
        self.rows.push(Row { id, values });
        id
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableStore {
    pub tables: BTreeMap<String, Table>,
}

impl TableStore {
    /// Empty tables for every model of `ir`.
    pub fn empty(ir: &AppIR) -> Self {
        let tables = ir
            .models
            .iter()
            .map(|m| (m.table.clone(), Table::new(m.column_names().map(String::from).collect())))
            .collect();
        TableStore { tables }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn len(&self, table: &str) -> usize {
        self.tables.get(table).map_or(0, |t| t.rows.len())
    }

    pub fn is_empty(&self) -> bool {
        self.tables.values().all(|t| t.rows.is_empty())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("store serializes")
    }
}

/// Constant domains per `(table, column)`, used for columns only ever
/// assigned constants.
pub type Domains = BTreeMap<(String, String), Vec<Value>>;

/// `(child table, fk column) -> parent table` for every association.
fn foreign_keys(ir: &AppIR) -> BTreeMap<(String, String), String> {
    let mut out = BTreeMap::new();
    for m in &ir.models {
        for a in &m.associations {
            let Some(t) = ir.model(&a.target) else { continue };
            match a.kind {
                AssocKind::BelongsTo => out.insert((m.table.clone(), a.foreign_key.clone()), t.table.clone()),
                AssocKind::HasOne | AssocKind::HasMany => {
                    out.insert((t.table.clone(), a.foreign_key.clone()), m.table.clone())
                }
            };
        }
    }
    out
}

pub fn random_string(rng: &mut SplitMix64, len: usize) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    (0..len).map(|_| ALPHABET[rng.index(ALPHABET.len())] as char).collect()
}

/// A random value of a column kind.
pub fn random_value(rng: &mut SplitMix64, kind: FieldKind) -> Value {
    match kind {
        FieldKind::Int => Value::Int(rng.range_i64(0, 9)),
        FieldKind::Float => Value::Float((rng.unit_f64() * 1000.0).round() / 10.0),
        FieldKind::Bool => Value::Bool(rng.below(2) == 1),
        FieldKind::Datetime => Value::Int(rng.range_i64(NOW - DATETIME_WINDOW, NOW)),
        FieldKind::String { max_len } => {
            let max = (max_len as usize).clamp(1, 12);
            let len = rng.range_i64(1, max as i64) as usize;
            Value::Str(random_string(rng, len))
        }
        FieldKind::Text => Value::Str(random_string(rng, TEXT_LEN)),
    }
}

/// Fill every table with `rows_per_model` rows. Ids run `1..=n`; foreign
/// keys are uniform over the parent's ids and columns with a known constant
/// domain draw from it.
pub fn generate_data_with(ir: &AppIR, seed: u64, rows_per_model: usize, domains: &Domains) -> TableStore {
    let mut rng = SplitMix64::new(seed);
    let fks = foreign_keys(ir);
    let mut store = TableStore::empty(ir);
    for m in &ir.models {
        let mut trng = rng.split();
        let table = store.tables.get_mut(&m.table).expect("table exists");
        for _ in 0..rows_per_model {
            let values = generate_row(m, &mut trng, &fks, domains, rows_per_model);
            table.insert(values);
        }
    }
    store
}

fn generate_row(
    m: &ModelDecl,
    rng: &mut SplitMix64,
    fks: &BTreeMap<(String, String), String>,
    domains: &Domains,
    parent_rows: usize,
) -> BTreeMap<String, Value> {
    let mut values = BTreeMap::new();
    for f in m.fields.iter().filter(|f| f.name != "id") {
        let key = (m.table.clone(), f.name.clone());
        let v = if fks.contains_key(&key) {
            if parent_rows == 0 {
                Value::Null
            } else {
                Value::Int(rng.range_i64(1, parent_rows as i64))
            }
        } else if let Some(dom) = domains.get(&key).filter(|d| !d.is_empty()) {
            dom[rng.index(dom.len())].clone()
        } else {
            random_value(rng, f.kind)
        };
        values.insert(f.name.clone(), v);
    }
    values
}
