//! Static ORM anti-pattern analysis and workload simulation for RailLite
//! applications.

pub mod afg;
pub mod app_model;
pub mod detectors;
pub mod pipeline;
pub mod report;
pub mod rewrite;
pub mod sim;
pub mod value;

pub use afg::{
    build_action_graph, build_afg, build_all_afgs, ActionGraph, Afg, AfgNode, NodeId, NodeKind, QueryDescriptor,
};
pub use app_model::{column_byte_size, parse_app, validate, ActionId, AppIR, Diagnostic, Location, ParseError};
pub use detectors::{run_detectors, DetectorKind, Finding, FindingDetail};
pub use pipeline::{analyze_source, Analysis, PipelineError};
pub use report::{aggregate, emit_report, AppSummary, ApplicationReport, Format, ReportDocument, ReportError};
pub use rewrite::{suggest_rewrites, RewriteSuggestion, Rewrites};
pub use sim::{generate_data, run_session, simulate, SessionConfig, SessionLog, SimConfig, Simulation, TableStore};
pub use value::Value;
