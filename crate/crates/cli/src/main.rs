//! `ormlens` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ormlens_core::afg::to_dot;
use ormlens_core::pipeline::PipelineError;
use ormlens_core::report::color_from_env;
use ormlens_core::sim::SimConfig;
use ormlens_core::{analyze_source, emit_report, DetectorKind, Format, ReportDocument};

#[derive(Parser)]
#[command(name = "ormlens", version, about = "ORM anti-pattern analyzer and workload simulator for RailLite apps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the static detectors and suggest rewrites.
    Analyze(AnalyzeArgs),
    /// Analyze, then simulate user sessions and add caching/prefetching stats.
    Simulate(SimulateArgs),
    /// Merge earlier JSON reports and re-emit them.
    Report(ReportArgs),
    /// Parse and validate, printing the application IR as JSON.
    Parse(ParseArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// json, csv or text.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalysisArgs {
    /// `.rlite` files or directories containing them.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Comma-separated detector ids; all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_detector)]
    detectors: Vec<DetectorKind>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Print only the suggested SQL, one statement per line.
    #[arg(long)]
    sql_only: bool,
    /// Directory for one Graphviz file per action.
    #[arg(long)]
    dot_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ormlens_core::sim::DEFAULT_SESSIONS)]
    sessions: usize,
    #[arg(long, default_value_t = ormlens_core::sim::DEFAULT_ROWS_PER_MODEL)]
    rows_per_model: usize,
    #[arg(long, default_value_t = ormlens_core::sim::DEFAULT_SESSION_LENGTH, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    session_length: usize,
    /// Write every session's query log here as NDJSON.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON reports written by `analyze` or `simulate`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ParseArgs {
    path: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: ormlens_core::ReportError| e.to_string())
}

fn parse_detector(s: &str) -> Result<DetectorKind, String> {
    s.parse()
}

/// Failures reported with exit code 1.
#[derive(Debug)]
struct Failed;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<Failed>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("diagnostics reported")
    }
}

impl std::error::Error for Failed {}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(s) => simulate(s),
        Command::Report(r) => report(r),
        Command::Parse(p) => parse(p),
    }
}

/// `.rlite` files under the given paths, each directory listed in name
/// order.
fn collect_sources(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    walk(paths, &mut out)?;
    if out.is_empty() {
        bail!("no .rlite sources found");
    }
    Ok(out)
}

fn walk(paths: &[PathBuf], out: &mut Vec<PathBuf>) -> Result<()> {
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("{}: cannot read directory", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            for e in entries {
                if e.is_dir() {
                    walk(&[e], out)?;
                } else if e.extension().is_some_and(|x| x == "rlite") {
                    out.push(e);
                }
            }
        } else if p.exists() {
            out.push(p.clone());
        } else {
            bail!("{}: file not found", p.display());
        }
    }
    Ok(())
}

fn app_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn detectors(a: &AnalysisArgs) -> Vec<DetectorKind> {
    if a.detectors.is_empty() {
        DetectorKind::ALL.to_vec()
    } else {
        let mut d = a.detectors.clone();
        d.sort();
        d.dedup();
        d
    }
}

/// Analyze each source; diagnostics go to stderr and make the run fail
/// after every file has been tried.
fn analyze_all(a: &AnalysisArgs) -> Result<Vec<(String, ormlens_core::Analysis)>> {
    let sources = collect_sources(&a.paths)?;
    let enabled = detectors(a);
    let mut out = Vec::new();
    let mut failed = false;
    for path in sources {
        let src = fs::read_to_string(&path).with_context(|| format!("{}: cannot read", path.display()))?;
        match analyze_source(&src, &enabled) {
            Ok(an) => out.push((app_name(&path), an)),
            Err(PipelineError::Diagnostics(ds)) => {
                failed = true;
                for d in ds {
                    eprintln!("{}:{d}", path.display());
                }
            }
            Err(e) => {
                failed = true;
                eprintln!("{}: {e}", path.display());
            }
        }
    }
    if failed {
        return Err(Failed.into());
    }
    Ok(out)
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("{}: cannot write", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn render(doc: &ReportDocument, output: &OutputArgs) -> Result<()> {
    let color = output.format == Format::Text && color_from_env();
    write_output(&output.out, &emit_report(doc, output.format, color))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let apps = analyze_all(&a.analysis)?;
    if let Some(dir) = &a.dot_out {
        fs::create_dir_all(dir).with_context(|| format!("{}: cannot create", dir.display()))?;
        for (name, an) in &apps {
            for (id, afg) in &an.graph.afgs {
                let file = dir.join(format!("{name}.{}.{}.dot", id.controller, id.action));
                fs::write(&file, to_dot(afg)).with_context(|| format!("{}: cannot write", file.display()))?;
            }
        }
    }
    if a.sql_only {
        let mut text = String::new();
        for (_, an) in &apps {
            for s in &an.rewrites.suggestions {
                for q in &s.suggested_sql {
                    text.push_str(&q.text);
                    text.push('\n');
                }
            }
        }
        return write_output(&a.output.out, &text);
    }
    let doc = ReportDocument::new(apps.iter().map(|(n, an)| an.report(n, None)).collect());
    render(&doc, &a.output)
}

fn simulate(s: SimulateArgs) -> Result<()> {
    let apps = analyze_all(&s.analysis)?;
    let cfg = SimConfig {
        seed: s.seed,
        sessions: s.sessions,
        rows_per_model: s.rows_per_model,
        session_length: s.session_length,
    };
    let mut reports = Vec::new();
    let mut logs = String::new();
    for (name, an) in &apps {
        let sim = an.simulate(&cfg).with_context(|| format!("{name}: simulation failed"))?;
        logs.push_str(&sim.to_ndjson());
        reports.push(an.report(name, Some(&sim)));
    }
    if let Some(p) = &s.log_out {
        fs::write(p, logs).with_context(|| format!("{}: cannot write", p.display()))?;
    }
    render(&ReportDocument::new(reports), &s.output)
}

fn report(r: ReportArgs) -> Result<()> {
    let mut docs = Vec::new();
    for p in &r.inputs {
        let text = fs::read_to_string(p).with_context(|| format!("{}: file not found", p.display()))?;
        docs.push(ReportDocument::from_json(&text).with_context(|| format!("{}", p.display()))?);
    }
    render(&ReportDocument::merge(docs), &r.output)
}

fn parse(p: ParseArgs) -> Result<()> {
    let src = fs::read_to_string(&p.path).with_context(|| format!("{}: file not found", p.path.display()))?;
    let ir = match ormlens_core::app_model::parse_syntax(&src) {
        Ok(ir) => ir,
        Err(e) => {
            eprintln!("{}:{e}", p.path.display());
            return Err(Failed.into());
        }
    };
    let mut diags = ormlens_core::validate(&ir);
    if !diags.is_empty() {
        diags.sort();
        for d in diags {
            eprintln!("{}:{d}", p.path.display());
        }
        return Err(Failed.into());
    }
    let mut text = serde_json::to_string_pretty(&ir)?;
    text.push('\n');
    write_output(&p.out, &text)
}
