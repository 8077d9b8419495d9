//! Benchmark harness and analysis front door.
//!
//! Subcommands: `run` a strategy over a JSONL manifest against a backend,
//! `analyze` persisted traces for confidence/accuracy correlation, `scaling`
//! to sweep compute budgets, and `gen-corpus` to build synthetic datasets.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use temporal_search::backend::{HttpBackend, HttpBackendConfig, VideoLlm};
use temporal_search::domain::{FinalSelection, SearchConfig};
use temporal_search::frames::{FrameStore, FrameStoreKind};
use temporal_search::harness::{
    confidence_analysis, load_manifest, load_trace_rows, oracle_factory, procedural_factory,
    render_analysis_table, run_manifest, save_manifest, scaling_experiment, shared_backend_factory,
    write_scaling_points, BackendFactory, ManifestRecord, RunOptions, Strategy, TraceRow,
};
use temporal_search::oracle::{generate_corpus, CorpusSpec};
use temporal_search::prompts::PromptSet;
use temporal_search::Result;

#[derive(Parser)]
#[command(name = "tsearch", version, about = "Temporal search over long videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a strategy over every record of a manifest.
    Run(RunArgs),
    /// Confidence-accuracy analysis over persisted trace files.
    Analyze(AnalyzeArgs),
    /// Accuracy-vs-compute sweep over a budget grid.
    Scaling(ScalingArgs),
    /// Generate a synthetic corpus manifest.
    GenCorpus(GenCorpusArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Us,
    Utv,
    Ts,
    TsBfs,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Us => Strategy::Us,
            StrategyArg::Utv => Strategy::Utv,
            StrategyArg::Ts => Strategy::Ts,
            StrategyArg::TsBfs => Strategy::TsBfs,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    /// OpenAI-compatible chat-completions server.
    Http,
    /// Simulated model over the records' embedded synthetic worlds.
    Oracle,
    /// Seeded procedural stand-in; useful for smoke runs.
    Stub,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file mirroring the search config fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum search iterations.
    #[arg(long)]
    k: Option<u32>,
    /// Candidate expansions per step.
    #[arg(long)]
    n: Option<u32>,
    /// Frames per inference call.
    #[arg(long)]
    n_f: Option<u32>,
    /// Early-stop confidence threshold.
    #[arg(long)]
    c1: Option<f64>,
    /// Keyframe-memory confidence threshold.
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    w_conf: Option<f64>,
    #[arg(long)]
    w_eval: Option<f64>,
    /// Concurrent sibling evaluations per expansion.
    #[arg(long)]
    parallel_width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Node set the final answer is drawn from: all-visited or frontier-only.
    #[arg(long)]
    final_selection: Option<String>,
    /// Pieces for the temporal-voting baseline.
    #[arg(long)]
    utv_intervals: Option<u32>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<SearchConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                SearchConfig::from_json(&text)?
            }
            None => SearchConfig::default(),
        };
        macro_rules! merge {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        merge!(
            k,
            n,
            n_f,
            c1,
            c2,
            w_conf,
            w_eval,
            parallel_width,
            seed,
            utv_intervals
        );
        if let Some(mode) = &self.final_selection {
            config.final_selection = match mode.as_str() {
                "all-visited" | "all_visited" => FinalSelection::AllVisited,
                "frontier-only" | "frontier_only" => FinalSelection::FrontierOnly,
                other => {
                    return Err(temporal_search::Error::Config(format!(
                        "unknown final selection '{other}'"
                    )))
                }
            };
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: BackendArg,
    /// Chat-completions base URL, e.g. http://localhost:8000/v1.
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent with every request.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    /// Per-call timeout in seconds.
    #[arg(long, default_value_t = 120)]
    timeout_s: u64,
    /// Directory of prompt template overrides.
    #[arg(long)]
    prompt_dir: Option<PathBuf>,
    /// Root of pre-extracted frame directories; overrides the per-record
    /// frames_root.
    #[arg(long)]
    frames_root: Option<PathBuf>,
    /// External frame decoder command template with {video} and {index}.
    #[arg(long)]
    frame_command: Option<String>,
}

impl BackendArgs {
    fn factory(
        &self,
        records: &[ManifestRecord],
        seed: u64,
    ) -> Result<Box<BackendFactory<'static>>> {
        match self.backend {
            BackendArg::Oracle => Ok(Box::new(oracle_factory())),
            BackendArg::Stub => Ok(Box::new(procedural_factory(seed))),
            BackendArg::Http => {
                let base_url = self.base_url.clone().ok_or_else(|| {
                    temporal_search::Error::Config(
                        "--base-url is required with --backend http".into(),
                    )
                })?;
                let model = self.model.clone().ok_or_else(|| {
                    temporal_search::Error::Config("--model is required with --backend http".into())
                })?;
                let mut config = HttpBackendConfig::new(base_url, model);
                config.timeout = std::time::Duration::from_secs(self.timeout_s);
                config.api_key = std::env::var(&self.api_key_env).ok();
                if config.api_key.is_none() {
                    log::warn!(
                        "no API key in ${}; sending unauthenticated",
                        self.api_key_env
                    );
                }
                let prompts = match &self.prompt_dir {
                    Some(dir) => PromptSet::load_dir(dir)?,
                    None => PromptSet::default(),
                };
                let kind = match (&self.frame_command, &self.frames_root) {
                    (Some(template), _) => FrameStoreKind::ExternalCommand {
                        template: template.clone(),
                    },
                    (None, Some(root)) => FrameStoreKind::Directory { root: root.clone() },
                    (None, None) => {
                        let root = records.iter().find_map(|r| r.frames_root.clone());
                        match root {
                            Some(root) => FrameStoreKind::Directory { root },
                            None => {
                                return Err(temporal_search::Error::Config(
                                    "no frames root: pass --frames-root or set frames_root in the manifest".into(),
                                ))
                            }
                        }
                    }
                };
                let store = Arc::new(FrameStore::new(kind, 256 << 20));
                let backend: Arc<dyn VideoLlm> = Arc::new(HttpBackend::new(config, prompts, store));
                Ok(Box::new(shared_backend_factory(backend)))
            }
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSONL manifest path.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for traces.jsonl, report.json, report.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Concurrent records.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// One or more traces.jsonl files (single-pass runs feed the video level,
    /// voting runs the interval level).
    #[arg(long = "traces", required = true)]
    traces: Vec<PathBuf>,
    /// Output directory for the curve files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated custom thresholds in [0, 1].
    #[arg(long)]
    thresholds: Option<String>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated budget grid, e.g. 1,5,10.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Corpus spec JSON; omit to use a preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in preset: canonical (200 long videos) or smoke (12 mixed).
    #[arg(long, default_value = "canonical")]
    preset: String,
    /// Output manifest path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

/// Writes to stdout, swallowing broken pipes so `tsearch ... | head` exits
/// cleanly instead of panicking.
fn emit(text: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if let Err(err) = stdout.write_fmt(text) {
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            return;
        }
        panic!("failed writing to stdout: {err}");
    }
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        let mut line = format!($($arg)*);
        line.push('\n');
        emit(format_args!("{line}"));
    }};
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Scaling(args) => cmd_scaling(args),
        Command::GenCorpus(args) => cmd_gen_corpus(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let records = load_manifest(&args.manifest)?;
    let config = args.config.resolve()?;
    let factory = args.backend.factory(&records, config.seed)?;
    let options = RunOptions {
        strategy: args.strategy.into(),
        config,
        workers: args.workers.max(1),
        out_dir: Some(args.out_dir.clone()),
    };
    let (report, _) = run_manifest(&records, factory.as_ref(), &options)?;
    outln!(
        "{}: {} records, accuracy {:.4} ({} / {} evaluated)",
        report.strategy,
        report.aggregates.total,
        report.aggregates.accuracy,
        report.aggregates.correct,
        report.aggregates.evaluated,
    );
    for group in &report.aggregates.per_group {
        outln!(
            "  {}: accuracy {:.4} ({} / {})",
            group.group.as_str(),
            group.accuracy,
            group.correct,
            group.total
        );
    }
    outln!("artifacts written to {}", args.out_dir.display());
    if report.incomplete {
        eprintln!("warning: some records aborted; report flagged incomplete");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let mut rows: Vec<TraceRow> = Vec::new();
    for path in &args.traces {
        rows.extend(load_trace_rows(path)?);
    }
    let thresholds = match &args.thresholds {
        Some(raw) => Some(
            raw.split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|e| {
                        temporal_search::Error::Config(format!("bad threshold '{t}': {e}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?,
        ),
        None => None,
    };
    let analysis = confidence_analysis(&rows, thresholds.as_deref())?;
    emit(format_args!("{}", render_analysis_table(&analysis)));
    std::fs::create_dir_all(&args.out_dir)?;
    let out = args.out_dir.join("confidence_analysis.json");
    std::fs::write(&out, serde_json::to_string_pretty(&analysis)?)?;
    outln!("analysis written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_scaling(args: ScalingArgs) -> Result<ExitCode> {
    let records = load_manifest(&args.manifest)?;
    let config = args.config.resolve()?;
    let factory = args.backend.factory(&records, config.seed)?;
    let grid: Vec<u32> = args
        .grid
        .split(',')
        .map(|g| {
            g.trim()
                .parse::<u32>()
                .map_err(|e| temporal_search::Error::Config(format!("bad grid value '{g}': {e}")))
        })
        .collect::<Result<Vec<u32>>>()?;
    let points = scaling_experiment(
        &records,
        factory.as_ref(),
        args.strategy.into(),
        &config,
        &grid,
        args.workers.max(1),
    )?;
    for p in &points {
        outln!(
            "{} requested={} mean_calls={:.2} accuracy={:.4}",
            p.strategy,
            p.requested,
            p.mean_calls_used,
            p.accuracy
        );
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let out = args.out_dir.join("scaling.jsonl");
    write_scaling_points(&points, &out)?;
    outln!("curve written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_corpus(args: GenCorpusArgs) -> Result<ExitCode> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<CorpusSpec>(&text)?
        }
        None => match args.preset.as_str() {
            "canonical" => CorpusSpec::canonical(),
            "smoke" => CorpusSpec::smoke(),
            other => {
                return Err(temporal_search::Error::Config(format!(
                    "unknown preset '{other}' (expected canonical or smoke)"
                )))
            }
        },
    };
    let records = generate_corpus(&spec)?;
    save_manifest(&records, &args.out)?;
    outln!(
        "{} records written to {}",
        records.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
