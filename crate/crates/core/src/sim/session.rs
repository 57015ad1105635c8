//! Random-walk user sessions over the action graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::interp::{Interp, InterpError, Offer, StepInfo};
use super::log::{SessionLog, StepRecord};
use super::rng::SplitMix64;
use super::store::{random_value, TableStore};
use crate::afg::lower::{lower_action, LoweredAction};
use crate::afg::ActionGraph;
use crate::app_model::{snake_case, ActionId, AppIR, Diagnostic};
use crate::value::Value;

/// Pages visited per session unless configured otherwise.
pub const DEFAULT_SESSION_LENGTH: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionConfig {
    pub seed: u64,
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_action: Option<ActionId>,
    /// Parameters for the first page, overriding synthesized ones.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub start_params: BTreeMap<String, Value>,
}

impl SessionConfig {
    pub fn new(seed: u64) -> Self {
        SessionConfig { seed, length: DEFAULT_SESSION_LENGTH, start_action: None, start_params: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("action graph is empty")]
    EmptyGraph,
    #[error("session length must be at least 1")]
    ZeroLength,
    #[error("unknown start action {0}")]
    UnknownAction(ActionId),
    #[error("{action}: lowering failed ({} diagnostics)", .diagnostics.len())]
    Lowering { action: ActionId, diagnostics: Vec<Diagnostic> },
    #[error("{action}: {source}")]
    Interp { action: ActionId, source: InterpError },
}

/// Lowered bodies of every action, shared by all sessions of a run.
pub struct Simulator<'a> {
    pub ir: &'a AppIR,
    pub graph: &'a ActionGraph,
    lowered: BTreeMap<ActionId, LoweredAction>,
}

impl<'a> Simulator<'a> {
    pub fn new(ir: &'a AppIR, graph: &'a ActionGraph) -> Result<Self, SimError> {
        let mut lowered = BTreeMap::new();
        for a in graph.afgs.keys() {
            let l = lower_action(ir, a).map_err(|diagnostics| SimError::Lowering { action: a.clone(), diagnostics })?;
            lowered.insert(a.clone(), l);
        }
        Ok(Simulator { ir, graph, lowered })
    }

    /// Run one session on a private copy of `store`.
    pub fn run(&self, store: &TableStore, cfg: &SessionConfig) -> Result<SessionLog, SimError> {
        if self.graph.afgs.is_empty() {
            return Err(SimError::EmptyGraph);
        }
        if cfg.length == 0 {
            return Err(SimError::ZeroLength);
        }
        let actions: Vec<&ActionId> = self.graph.afgs.keys().collect();
        let mut rng = SplitMix64::new(cfg.seed);
        let mut store = store.clone();
        let mut globals = BTreeMap::new();
        let mut log = SessionLog { seed: cfg.seed, ..SessionLog::default() };
        let mut seq = 0u64;

        let mut action = match &cfg.start_action {
            Some(a) if self.graph.afgs.contains_key(a) => a.clone(),
            Some(a) => return Err(SimError::UnknownAction(a.clone())),
            None => (*rng.choose(&actions).expect("nonempty")).clone(),
        };
        let mut params = self.synthesize_params(&action, &store, &mut rng);
        params.extend(cfg.start_params.clone());
        let mut record = StepRecord { step: 0, action: action.clone(), trigger: None, via: None, from: None, params };

        for step in 0..cfg.length {
            let info = StepInfo { step, trigger: record.trigger, form_fields: Vec::new() };
            let info = match (record.via, &record.from) {
                (Some(via), Some(from)) => {
                    let fields = match &self.graph.afgs[from].node(via).payload {
                        crate::afg::Payload::Target { fields, .. } => fields.clone(),
                        _ => Vec::new(),
                    };
                    StepInfo { form_fields: fields, ..info }
                }
                _ => info,
            };
            let offers = self.execute(&action, &mut store, &mut globals, &mut log, &mut seq, info, &record.params)?;
            log.steps.push(record.clone());
            if step + 1 == cfg.length {
                break;
            }
            record = match self.choose_next(&action, &offers, &mut rng) {
                Some(offer) => {
                    let mut p = self.bind_params(offer, &store, &mut rng);
                    p.retain(|k, _| self.lowered[&offer.target].params.contains(k));
                    StepRecord {
                        step: step + 1,
                        action: offer.target.clone(),
                        trigger: Some(offer.method),
                        via: Some(offer.via),
                        from: Some(action.clone()),
                        params: p,
                    }
                }
                None => {
                    let next = (*rng.choose(&actions).expect("nonempty")).clone();
                    let params = self.synthesize_params(&next, &store, &mut rng);
                    StepRecord { step: step + 1, action: next, trigger: None, via: None, from: None, params }
                }
            };
            action = record.action.clone();
        }
        Ok(log)
    }

    #[allow(clippy::too_many_arguments)]
    fn execute(
        &self,
        action: &ActionId,
        store: &mut TableStore,
        globals: &mut BTreeMap<String, Value>,
        log: &mut SessionLog,
        seq: &mut u64,
        info: StepInfo,
        params: &BTreeMap<String, Value>,
    ) -> Result<Vec<Offer>, SimError> {
        let afg = &self.graph.afgs[action];
        let lowered = &self.lowered[action];
        let mut interp =
            Interp::new(self.ir, afg, lowered, store, globals, &mut log.entries, seq, info, params.clone());
        interp.run(&lowered.body).map_err(|source| SimError::Interp { action: action.clone(), source })?;
        Ok(interp.offers)
    }

    /// Uniform over outgoing edges whose link or form was rendered, then
    /// uniform over that node's renderings.
    fn choose_next<'o>(&self, action: &ActionId, offers: &'o [Offer], rng: &mut SplitMix64) -> Option<&'o Offer> {
        let mut vias: Vec<_> = self
            .graph
            .outgoing(action)
            .filter(|e| self.lowered.contains_key(&e.to))
            .map(|e| e.via)
            .filter(|v| offers.iter().any(|o| o.via == *v))
            .collect();
        vias.sort();
        vias.dedup();
        let via = *rng.choose(&vias)?;
        let of_via: Vec<&Offer> = offers.iter().filter(|o| o.via == via).collect();
        rng.choose(&of_via).copied()
    }

    /// Link arguments as rendered; form fields filled with synthetic input.
    fn bind_params(&self, offer: &Offer, store: &TableStore, rng: &mut SplitMix64) -> BTreeMap<String, Value> {
        let mut p = offer.args.clone();
        for f in &offer.fields {
            let v = synthesize_param(self.ir, &offer.target, f, store, rng);
            p.insert(f.clone(), v);
        }
        p
    }

    fn synthesize_params(
        &self,
        action: &ActionId,
        store: &TableStore,
        rng: &mut SplitMix64,
    ) -> BTreeMap<String, Value> {
        self.lowered[action]
            .params
            .iter()
            .map(|p| (p.clone(), synthesize_param(self.ir, action, p, store, rng)))
            .collect()
    }
}

fn ids_of(store: &TableStore, table: &str, rng: &mut SplitMix64) -> Option<Value> {
    let t = store.table(table)?;
    let row = rng.choose(&t.rows)?;
    Some(Value::Int(row.id))
}

/// A plausible value for a request parameter: `id` is a row of the
/// controller's model, `x_id` a row of model `x`, a name matching some column
/// takes that column's kind, anything else a small integer.
pub fn synthesize_param(ir: &AppIR, action: &ActionId, name: &str, store: &TableStore, rng: &mut SplitMix64) -> Value {
    let small = |rng: &mut SplitMix64| Value::Int(rng.range_i64(0, 3));
    if name == "id" {
        let table = snake_case(&action.controller);
        return ir.model_by_table(&table).and_then(|m| ids_of(store, &m.table, rng)).unwrap_or_else(|| small(rng));
    }
    if let Some(model) = name.strip_suffix("_id") {
        if let Some(m) = ir.models.iter().find(|m| snake_case(&m.name) == model) {
            return ids_of(store, &m.table, rng).unwrap_or_else(|| small(rng));
        }
        return small(rng);
    }
    if let Some(f) = ir.models.iter().flat_map(|m| m.fields.iter()).find(|f| f.name == name) {
        return random_value(rng, f.kind);
    }
    small(rng)
}

/// Run a single session.
pub fn run_session(
    ir: &AppIR,
    graph: &ActionGraph,
    store: &TableStore,
    cfg: &SessionConfig,
) -> Result<SessionLog, SimError> {
    Simulator::new(ir, graph)?.run(store, cfg)
}
