//! End-to-end analysis of one application source.

use thiserror::Error;

use crate::afg::{build_action_graph, build_all_afgs, ActionGraph, AfgError};
use crate::app_model::{parse_syntax, validate, AppIR, Diagnostic, ParseError};
use crate::detectors::{run_detectors, DetectorKind, Finding};
use crate::report::{aggregate, AppSummary, ApplicationReport, SimulationSummary};
use crate::rewrite::{suggest_rewrites, Rewrites};
use crate::sim::{simulate, SimConfig, SimError, Simulation};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("{} diagnostics, first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Diagnostics(Vec<Diagnostic>),
    #[error(transparent)]
    Afg(#[from] AfgError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub ir: AppIR,
    pub graph: ActionGraph,
    pub detectors: Vec<DetectorKind>,
    pub findings: Vec<Finding>,
    pub rewrites: Rewrites,
}

/// Parse, validate (all diagnostics, sorted), build graphs, run detectors
/// and derive rewrite suggestions.
pub fn analyze_source(source: &str, detectors: &[DetectorKind]) -> Result<Analysis, PipelineError> {
    let ir = parse_syntax(source)?;
    let mut diags = validate(&ir);
    if !diags.is_empty() {
        diags.sort();
        return Err(PipelineError::Diagnostics(diags));
    }
    let graph = build_action_graph(&ir, build_all_afgs(&ir)?)?;
    let findings = run_detectors(&ir, &graph, detectors);
    let rewrites = suggest_rewrites(&ir, &graph, &findings);
    Ok(Analysis { ir, graph, detectors: detectors.to_vec(), findings, rewrites })
}

impl Analysis {
    pub fn simulate(&self, cfg: &SimConfig) -> Result<Simulation, PipelineError> {
        Ok(simulate(&self.ir, &self.graph, cfg)?)
    }

    pub fn summary(&self, application: &str, sim: Option<&Simulation>) -> AppSummary {
        let sim = sim.map(|s| SimulationSummary {
            config: s.config.clone(),
            sessions: s.sessions.len() as u64,
            means: s.means,
        });
        aggregate(application, &self.graph, &self.findings, &self.detectors, sim)
    }

    pub fn report(&self, application: &str, sim: Option<&Simulation>) -> ApplicationReport {
        ApplicationReport {
            summary: self.summary(application, sim),
            findings: self.findings.clone(),
            suggestions: self.rewrites.suggestions.clone(),
            inapplicable: self.rewrites.inapplicable.clone(),
        }
    }
}
