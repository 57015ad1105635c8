//! Workload simulation: synthetic data, a small relational engine, concrete
//! execution of actions and random-walk sessions.

pub mod engine;
pub mod interp;
pub mod log;
pub mod rng;
pub mod session;
pub mod stats;
pub mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use engine::{execute_select, execute_write, EngineError, ResultSet, RowIdent, Tuple, Views};
pub use log::{LoggedRow, QueryLogEntry, SessionLog, StepRecord};
pub use rng::SplitMix64;
pub use session::{run_session, synthesize_param, SessionConfig, SimError, Simulator, DEFAULT_SESSION_LENGTH};
pub use stats::{cache_decisions, cache_stats, prefetch_decisions, prefetch_stats, CacheStats, PrefetchStats};
pub use store::{generate_data_with, Domains, Row, Table, TableStore};

use crate::afg::QueryDescriptor;
use crate::afg::{build_all_afgs, ActionGraph};
use crate::app_model::AppIR;
use crate::detectors::{classify_column_sources, ColumnSourceLabel, FindingDetail};
use crate::rewrite::{plan_select, Bindings, RewriteError};

/// Sessions per application unless configured otherwise.
pub const DEFAULT_SESSIONS: usize = 50;
/// Rows generated per model unless configured otherwise.
pub const DEFAULT_ROWS_PER_MODEL: usize = 100;

/// Constant domains of `onlyConst` columns.
pub fn detect_domains(ir: &AppIR) -> Domains {
    let Ok(afgs) = build_all_afgs(ir) else { return Domains::new() };
    let refs: Vec<_> = afgs.iter().collect();
    let mut out = Domains::new();
    for f in classify_column_sources(&refs, ir) {
        if let FindingDetail::ColumnSource { table, column, label: ColumnSourceLabel::OnlyConst, domain, .. } = f.detail
        {
            if !domain.is_empty() {
                out.insert((table, column), domain);
            }
        }
    }
    out
}

/// Synthetic store with constant-domain detection.
pub fn generate_data(ir: &AppIR, seed: u64, rows_per_model: usize) -> TableStore {
    generate_data_with(ir, seed, rows_per_model, &detect_domains(ir))
}

/// Execute a read descriptor with bound slots.
pub fn execute_query(
    store: &TableStore,
    ir: &AppIR,
    q: &QueryDescriptor,
    bindings: &Bindings,
) -> Result<ResultSet, QueryError> {
    let plan = plan_select(q, ir, Some(bindings))?;
    Ok(execute_select(store, &Views::new(), &plan)?)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Plan(#[from] RewriteError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub seed: u64,
    pub sessions: usize,
    pub rows_per_model: usize,
    pub session_length: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            sessions: DEFAULT_SESSIONS,
            rows_per_model: DEFAULT_ROWS_PER_MODEL,
            session_length: DEFAULT_SESSION_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionResult {
    pub seed: u64,
    pub cache: CacheStats,
    pub prefetch: PrefetchStats,
}

/// Means over sessions; a session with no reads (or no triggered reads)
/// contributes no term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimMeans {
    pub hit_fraction: f64,
    pub syntactic_equiv_fraction: f64,
    pub equiv_differing_results_fraction: f64,
    pub prefetchable_fraction: f64,
    pub same_template_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Simulation {
    pub config: SimConfig,
    pub sessions: Vec<SessionResult>,
    pub means: SimMeans,
    #[serde(skip)]
    pub logs: Vec<SessionLog>,
}

impl Simulation {
    /// All session logs as NDJSON, sessions in order.
    pub fn to_ndjson(&self) -> String {
        self.logs.iter().map(SessionLog::to_ndjson).collect()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn session_means(sessions: &[SessionResult]) -> SimMeans {
    let cached = || sessions.iter().filter(|s| s.cache.reads > 0).map(|s| s.cache);
    let pre = || sessions.iter().filter(|s| s.prefetch.considered > 0).map(|s| s.prefetch);
    SimMeans {
        hit_fraction: mean(cached().map(|c| c.hit_fraction)),
        syntactic_equiv_fraction: mean(cached().map(|c| c.syntactic_equiv_fraction)),
        equiv_differing_results_fraction: mean(cached().map(|c| c.equiv_differing_results_fraction)),
        prefetchable_fraction: mean(pre().map(|p| p.prefetchable_fraction)),
        same_template_fraction: mean(pre().map(|p| p.same_template_fraction)),
    }
}

/// Generate one store from `cfg.seed` and run `cfg.sessions` independent
/// sessions over copies of it. Session seeds are drawn from the same stream
/// after the store seed, so results do not depend on thread scheduling.
pub fn simulate(ir: &AppIR, graph: &ActionGraph, cfg: &SimConfig) -> Result<Simulation, SimError> {
    let mut rng = SplitMix64::new(cfg.seed);
    let store_seed = rng.next_u64();
    let seeds: Vec<u64> = (0..cfg.sessions).map(|_| rng.next_u64()).collect();
    let store = generate_data(ir, store_seed, cfg.rows_per_model);
    let sim = Simulator::new(ir, graph)?;
    let logs: Vec<SessionLog> = seeds
        .par_iter()
        .map(|s| sim.run(&store, &SessionConfig { length: cfg.session_length, ..SessionConfig::new(*s) }))
        .collect::<Result<_, _>>()?;
    let sessions: Vec<SessionResult> = logs
        .iter()
        .map(|l| SessionResult { seed: l.seed, cache: cache_stats(l), prefetch: prefetch_stats(l, graph) })
        .collect();
    let means = session_means(&sessions);
    Ok(Simulation { config: cfg.clone(), sessions, means, logs })
}
