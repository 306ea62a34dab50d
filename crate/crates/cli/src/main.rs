use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gridplan_core::harness::{self, BackendKind, RunConfig, RunLog};
use gridplan_core::knowledge::{
    extract_knowledge, load_graph_unchecked, load_kb, verbalize, SubgoalGraph, SubgoalId,
};
use gridplan_core::llm::Gateway;
use gridplan_core::planner::{build_context, Planner};
use gridplan_core::tracker::TextObservation;

#[derive(Parser)]
#[command(
    name = "gridplan",
    version,
    about = "Subgoal-graph planning over a crafting gridworld"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured LLM backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Http,
    Mock,
    Replay,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Http => BackendKind::Http,
            Backend::Mock => BackendKind::Mock,
            Backend::Replay => BackendKind::Replay,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a graph, a knowledge base and optionally a run configuration.
    Validate {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Print the layered graph text.
    Verbalize {
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Append success-rate weights.
        #[arg(long)]
        weights: bool,
    },
    /// Run the planning pipeline once against an observation file.
    Plan {
        /// Four-line text observation.
        #[arg(long)]
        obs: PathBuf,
        /// Comma-separated subgoals already achieved this episode.
        #[arg(long, value_delimiter = ',')]
        achieved: Vec<String>,
    },
    /// Run the full training loop and write logs.
    Run,
    /// Aggregate success rates and score over run directories.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Draft a graph and knowledge base from documents.
    Extract {
        #[arg(required = true)]
        docs: Vec<PathBuf>,
    },
}

enum Status {
    Ok,
    Findings,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// Error chain joined with `: `, skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .context("--config is required for this command")?;
    // overrides apply before validation so `--backend` can pick a section the
    // configured backend would not need
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg =
        RunConfig::from_toml_str(&text).with_context(|| format!("loading {}", path.display()))?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(b) = cli.backend {
        cfg.llm.backend = b.into();
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn graph_path(cli: &Cli, explicit: &Option<PathBuf>) -> Result<PathBuf> {
    match (explicit, &cli.config) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(_)) => Ok(load_config(cli)?.graph),
        (None, None) => bail!("pass --graph or --config"),
    }
}

fn dispatch(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Validate { graph, kb } => validate(cli, graph, kb),
        Command::Verbalize { graph, weights } => {
            let g = load_graph_unchecked(&graph_path(cli, graph)?)?;
            println!("{}", verbalize(&g, *weights)?);
            Ok(Status::Ok)
        }
        Command::Plan { obs, achieved } => plan(cli, obs, achieved),
        Command::Run => {
            let cfg = load_config(cli)?;
            let log = harness::run(&cfg)?;
            if let Some(m) = &log.metrics {
                print!("{}", m.report.render_table());
            }
            println!("logs written to {}", cfg.out_dir.display());
            Ok(Status::Ok)
        }
        Command::Summarize { dirs, json } => {
            let logs = dirs
                .iter()
                .map(|d| RunLog::load(d))
                .collect::<Result<Vec<_>, _>>()?;
            let report = harness::summarize(&logs)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render_table());
            }
            Ok(Status::Ok)
        }
        Command::Extract { docs } => extract(cli, docs),
    }
}

fn validate(cli: &Cli, graph: &Option<PathBuf>, kb: &Option<PathBuf>) -> Result<Status> {
    let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
    if let Some(cfg) = &cfg {
        println!("config: ok");
        cfg.world_config()?.validate()?;
        println!("world: ok");
    }
    let graph_path = graph
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.graph.clone()));
    let kb_path = kb.clone().or_else(|| cfg.as_ref().map(|c| c.kb.clone()));
    let Some(graph_path) = graph_path else {
        bail!("pass --graph or --config")
    };
    let g = load_graph_unchecked(&graph_path)?;
    let mut findings: Vec<String> = g
        .validate()
        .findings
        .iter()
        .map(ToString::to_string)
        .collect();
    println!("graph: {} nodes, {} roots", g.len(), g.roots().len());
    if let Some(kb_path) = kb_path {
        let kb = load_kb(&kb_path)?;
        findings.extend(
            kb.validate_against(&g)
                .findings
                .iter()
                .map(|f| format!("kb: {f}")),
        );
        println!("kb: {} entities", kb.len());
    }
    for f in &findings {
        println!("finding: {f}");
    }
    Ok(if findings.is_empty() {
        Status::Ok
    } else {
        Status::Findings
    })
}

fn gateway(cfg: &RunConfig, out: Option<&Path>) -> Result<Gateway> {
    let gw = Gateway::from_config(&cfg.llm.backend_config()?)?;
    Ok(match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            gw.with_transcript_file(&dir.join(harness::TRANSCRIPT_FILE))?
        }
        None => gw,
    })
}

fn plan(cli: &Cli, obs: &Path, achieved: &[String]) -> Result<Status> {
    let cfg = load_config(cli)?;
    let text =
        std::fs::read_to_string(obs).with_context(|| format!("reading {}", obs.display()))?;
    let obs: TextObservation = text.parse()?;
    let graph: SubgoalGraph = gridplan_core::knowledge::load_graph(&cfg.graph)?;
    let kb = load_kb(&cfg.kb)?;
    let achieved = achieved
        .iter()
        .map(SubgoalId::new)
        .collect::<Result<BTreeSet<_>, _>>()?;
    let ctx = build_context(&obs, &graph, &kb, &achieved, &cfg.planner)?;
    let planner = Planner::new(cfg.planner.clone())?;
    let mut gw = gateway(&cfg, cli.out.as_deref())?;
    let (plan, trace) = planner.generate_plan(&ctx, &graph, &mut gw)?;
    println!("{}", serde_json::to_string_pretty(&trace)?);
    let ids: Vec<&str> = plan.subgoals.iter().map(SubgoalId::as_str).collect();
    println!(
        "plan: {} ({:?}, {} calls)",
        ids.join(", "),
        plan.provenance,
        trace.llm_calls()
    );
    Ok(Status::Ok)
}

fn extract(cli: &Cli, docs: &[PathBuf]) -> Result<Status> {
    let cfg = load_config(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let texts = docs
        .iter()
        .map(|d| std::fs::read_to_string(d).with_context(|| format!("reading {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut gw = gateway(&cfg, Some(&out))?;
    let outcome = extract_knowledge(&texts, &mut gw, &out)?;
    println!("graph draft: {}", outcome.graph_draft.display());
    println!("kb draft: {}", outcome.kb_draft.display());
    for f in outcome.graph_findings.iter().chain(&outcome.kb_findings) {
        println!("finding: {f}");
    }
    Ok(if outcome.is_clean() {
        Status::Ok
    } else {
        Status::Findings
    })
}
