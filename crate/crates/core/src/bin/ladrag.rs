use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ladrag::agent::{retrieve, AgentError};
use ladrag::config::{Config, ConfigError, SessionMode};
use ladrag::eval::{
    k_for_perfect_recall, load_dataset, run_eval, sweep_topk, Baseline, Corpus, EvalError, RetrieverSpec,
};
use ladrag::gateway::{Gateway, GatewayError};
use ladrag::index::{IndexError, NeuralIndex};
use ladrag::ingest::{ingest_and_index, pages_from_image_dir, pages_from_json, IngestError};
use ladrag::json::to_canonical_pretty;
use ladrag::model::{deserialize_graph, serialize_graph, DocumentGraph, GraphError};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_TRANSPORT: u8 = 5;

#[derive(Parser)]
#[command(name = "ladrag", version, about = "Layout-aware retrieval over multi-page documents")]
struct Cli {
    /// JSON configuration file (default: $LADRAG_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Machine-readable output on stdout
    #[arg(long, global = true)]
    json: bool,
    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Session {
    /// Serve model responses from a recorded transcript
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Record model exchanges to a transcript
    #[arg(long)]
    record: Option<PathBuf>,
}

impl Session {
    fn mode(&self) -> SessionMode {
        match (&self.replay, &self.record) {
            (Some(p), _) => SessionMode::Replay(p.clone()),
            (None, Some(p)) => SessionMode::Record(p.clone()),
            (None, None) => SessionMode::Live,
        }
    }
}

#[derive(Args)]
struct Ablation {
    /// Disable the contextualize tool
    #[arg(long)]
    no_contextualize: bool,
    /// Disable the symbolic graph query tool
    #[arg(long)]
    no_graph_query: bool,
    /// Override the round limit
    #[arg(long)]
    max_rounds: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a document graph (and optionally its dense index) from page images or pre-extracted elements
    Ingest {
        /// Directory of page images, or a JSON file with --pre-extracted
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        doc_id: String,
        /// Graph output file
        #[arg(long)]
        out: PathBuf,
        /// Also write the dense index here
        #[arg(long)]
        index_out: Option<PathBuf>,
        /// Read --doc as a JSON array of pages of element objects
        #[arg(long)]
        pre_extracted: bool,
        /// Abort on the first failed page
        #[arg(long)]
        fail_fast: bool,
        #[command(flatten)]
        session: Session,
    },
    /// Embed every node summary of a graph
    Index {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        session: Session,
    },
    /// Run the retrieval agent for one question
    Retrieve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        ablation: Ablation,
        #[command(flatten)]
        session: Session,
    },
    /// Score a retriever on a JSONL dataset
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory holding <doc_id>.json and <doc_id>.idx
        #[arg(long)]
        graph_dir: PathBuf,
        #[arg(long, value_enum)]
        retriever: RetrieverArg,
        /// Pages returned by the bm25 and dense baselines
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        /// Also sweep the baseline over k = 1..=K
        #[arg(long, value_name = "K")]
        sweep: Option<usize>,
        /// Report directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ablation: Ablation,
        #[command(flatten)]
        session: Session,
    },
    /// Mean PR and IPR of a top-k baseline for k = 1..=k_max
    SweepK {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        graph_dir: PathBuf,
        #[arg(long, value_enum)]
        retriever: BaselineArg,
        #[arg(long)]
        k_max: usize,
        #[command(flatten)]
        session: Session,
    },
    /// Check a graph file (and optionally its index) against the schema and invariants
    Validate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RetrieverArg {
    Ladrag,
    Bm25,
    Dense,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Bm25,
    Dense,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Baseline {
        match b {
            BaselineArg::Bm25 => Baseline::Bm25,
            BaselineArg::Dense => Baseline::Dense,
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn gateway_code(e: &GatewayError) -> u8 {
    match e {
        GatewayError::Transport(_) | GatewayError::Authentication(_) => EXIT_TRANSPORT,
        GatewayError::NotConfigured(_) => EXIT_CONFIG,
        GatewayError::ReplayMiss { .. } | GatewayError::Transcript(_) | GatewayError::DimensionMismatch { .. } => {
            EXIT_DATA
        }
        GatewayError::InvalidRequest(_) => EXIT_OTHER,
    }
}

fn index_code(e: &IndexError) -> u8 {
    match e {
        IndexError::Gateway(g) => gateway_code(g),
        _ => EXIT_DATA,
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match &e {
            ConfigError::Gateway(g) if gateway_code(g) != EXIT_CONFIG => gateway_code(g),
            _ => EXIT_CONFIG,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let code = match &e {
            IngestError::Gateway(g) => gateway_code(g),
            IngestError::Index(i) => index_code(i),
            _ => EXIT_DATA,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<IndexError> for Failure {
    fn from(e: IndexError) -> Self {
        Failure::new(index_code(&e), e.to_string())
    }
}

impl From<AgentError> for Failure {
    fn from(e: AgentError) -> Self {
        let code = match &e {
            AgentError::Gateway(g) => gateway_code(g),
            AgentError::InvalidConfig(_) => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::Gateway(g) => gateway_code(g),
            EvalError::Index(i) => index_code(i),
            EvalError::Agent(AgentError::Gateway(g)) => gateway_code(g),
            EvalError::Agent(AgentError::InvalidConfig(_)) => EXIT_CONFIG,
            EvalError::InvalidK => EXIT_OTHER,
            _ => EXIT_DATA,
        };
        Failure::new(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<DocumentGraph, Failure> {
    deserialize_graph(&read(path)?)
        .map_err(|e| Failure::new(EXIT_DATA, format!("{}: {}", path.display(), graph_error_text(&e))))
}

fn graph_error_text(e: &GraphError) -> String {
    match e {
        GraphError::Invalid(violations) => {
            let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
            format!("{} invariant violation(s):\n{}", violations.len(), lines.join("\n"))
        }
        other => other.to_string(),
    }
}

fn load_index(path: &Path) -> Result<NeuralIndex, Failure> {
    NeuralIndex::from_bytes(&read(path)?).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn emit_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let bytes = to_canonical_pretty(value).map_err(|e| Failure::new(EXIT_OTHER, e.to_string()))?;
    std::io::stdout().write_all(&bytes).map_err(|e| Failure::new(EXIT_OTHER, e.to_string()))
}

fn agent_config(config: &Config, ablation: &Ablation) -> Result<ladrag::agent::AgentConfig, Failure> {
    let mut agent = config.agent.clone();
    agent.enable_contextualize &= !ablation.no_contextualize;
    agent.enable_graph_query &= !ablation.no_graph_query;
    if let Some(rounds) = ablation.max_rounds {
        agent.max_rounds = rounds;
    }
    agent.validate().map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    Ok(agent)
}

fn gateway(config: &Config, session: &Session) -> Result<Gateway, Failure> {
    Ok(config.gateway(&session.mode())?)
}

fn load_corpus(dataset: &Path, graph_dir: &Path) -> Result<(Vec<ladrag::eval::QaRecord>, Corpus), Failure> {
    let records = load_dataset(dataset)?;
    let corpus = Corpus::load_dir(graph_dir, records.iter().map(|r| r.doc_id.as_str()))?;
    Ok((records, corpus))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { doc, doc_id, out, index_out, pre_extracted, fail_fast, session } => {
            let pages = if pre_extracted {
                pages_from_json(&read(&doc)?)?
            } else if doc.is_dir() {
                pages_from_image_dir(&doc)?
            } else {
                return Err(Failure::new(
                    EXIT_DATA,
                    format!(
                        "{} is not a directory of page images (use --pre-extracted for element JSON)",
                        doc.display()
                    ),
                ));
            };
            let gw = gateway(&config, &session)?;
            let mut options = config.ingest.clone();
            options.fail_fast |= fail_fast;
            let (graph, index, report) = ingest_and_index(&doc_id, &pages, &gw, &options)?;
            let bytes = serialize_graph(&graph).map_err(|e| Failure::new(EXIT_OTHER, graph_error_text(&e)))?;
            write(&out, &bytes)?;
            if let Some(path) = index_out {
                write(&path, &index.to_bytes()?)?;
            }
            if cli.json {
                emit_json(&report)?;
            } else {
                println!(
                    "{}: {} pages, {} nodes, {} edges, {} model calls, {} warnings -> {}",
                    report.doc_id,
                    report.pages_processed,
                    report.nodes_created,
                    report.edges_created.values().sum::<usize>(),
                    report.llm_calls,
                    report.warnings.len(),
                    out.display()
                );
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
            }
        }
        Command::Index { graph, out, session } => {
            let graph = load_graph(&graph)?;
            let gw = gateway(&config, &session)?;
            let index = NeuralIndex::build(&graph, &gw)?;
            write(&out, &index.to_bytes()?)?;
            if cli.json {
                emit_json(
                    &serde_json::json!({"doc_id": index.doc_id, "embedder": index.embedder, "entries": index.len()}),
                )?;
            } else {
                println!("{}: {} entries ({}) -> {}", index.doc_id, index.len(), index.embedder, out.display());
            }
        }
        Command::Retrieve { graph, index, question, ablation, session } => {
            let graph = load_graph(&graph)?;
            let index = load_index(&index)?;
            let agent = agent_config(&config, &ablation)?;
            let gw = gateway(&config, &session)?;
            let result = retrieve(&question, &graph, &index, &gw, &agent)?;
            if cli.json {
                emit_json(&result)?;
            } else {
                let pages: Vec<String> = result.evidence_pages.iter().map(u32::to_string).collect();
                let nodes: Vec<String> = result.evidence_nodes.iter().map(ToString::to_string).collect();
                println!("pages: {}", pages.join(", "));
                println!("nodes: {}", nodes.join(", "));
                println!("termination: {:?}, model calls: {}", result.termination, result.llm_calls);
            }
        }
        Command::Eval { dataset, graph_dir, retriever, top_k, sweep, out, ablation, session } => {
            let (records, corpus) = load_corpus(&dataset, &graph_dir)?;
            let spec = match retriever {
                RetrieverArg::Ladrag => RetrieverSpec::Ladrag(agent_config(&config, &ablation)?),
                RetrieverArg::Bm25 => RetrieverSpec::TopK { baseline: Baseline::Bm25, k: top_k },
                RetrieverArg::Dense => RetrieverSpec::TopK { baseline: Baseline::Dense, k: top_k },
                RetrieverArg::Oracle => RetrieverSpec::Oracle,
            };
            let gw = gateway(&config, &session)?;
            let summary = run_eval(&records, &corpus, &spec, &gw, &out, sweep)?;
            if cli.json {
                emit_json(&summary)?;
            } else {
                println!(
                    "{}: {} questions, mean PR {:.4}, mean IPR {:.4}, PR/IPR {} -> {}",
                    summary.retriever,
                    summary.questions,
                    summary.mean_pr,
                    summary.mean_ipr,
                    summary.composite,
                    out.display()
                );
            }
        }
        Command::SweepK { dataset, graph_dir, retriever, k_max, session } => {
            let (records, corpus) = load_corpus(&dataset, &graph_dir)?;
            let gw = gateway(&config, &session)?;
            let curve = sweep_topk(&records, &corpus, retriever.into(), k_max, &gw)?;
            if cli.json {
                emit_json(&curve)?;
            } else {
                println!("{:>4}  {:>8}  {:>8}", "k", "mean PR", "mean IPR");
                for p in &curve {
                    println!("{:>4}  {:>8.4}  {:>8.4}", p.k, p.mean_pr, p.mean_ipr);
                }
                match k_for_perfect_recall(&curve) {
                    Some(k) => println!("perfect recall from k = {k}"),
                    None => println!("perfect recall not reached by k = {k_max}"),
                }
            }
        }
        Command::Validate { graph, index } => {
            let g = load_graph(&graph)?;
            if let Some(path) = &index {
                let idx = load_index(path)?;
                if !idx.covers(&g) {
                    return Err(Failure::new(
                        EXIT_DATA,
                        format!("{}: does not cover {}", path.display(), graph.display()),
                    ));
                }
            }
            if cli.json {
                emit_json(&serde_json::json!({
                    "valid": true,
                    "doc_id": g.doc_id(),
                    "pages": g.page_count(),
                    "nodes": g.node_count(),
                    "edges": g.edges().len(),
                    "communities": g.communities().map(|c| c.community_count()),
                }))?;
            } else {
                println!("{}: ok ({} nodes, {} edges)", graph.display(), g.node_count(), g.edges().len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if json {
                let body = serde_json::json!({"error": failure.message, "exit_code": failure.code});
                let _ = writeln!(std::io::stdout(), "{body}");
            }
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
