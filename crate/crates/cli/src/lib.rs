//! Command-line front end: knowledge-base validation, the standalone
//! checker, single-task runs and benchmark runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use plc_st::{compile, CompilerAdapter, DialectProfile, DialectRegistry, ExternalCompiler};
use stgen_core::generator::{persist_artifacts, run_pipeline, Ablation, Outcome, PipelineConfig, Resources};
use stgen_core::harness::{load_tasks, report, run_benchmark, BenchTask, ReportFormat};
use stgen_core::kb::{build_index, load_apilib, load_rq2st, ApiLib, CaseStore};
use stgen_core::llm::{
    LiveConfig, LiveGateway, LlmGateway, Pricing, RecordingGateway, ReplayGateway, ReqwestTransport,
};
use stgen_core::retrieval::{EmbeddingProvider, FixtureEmbeddings};
use stgen_core::task::Task;
use stgen_core::templates::Templates;

#[derive(Debug, Parser)]
#[command(name = "stgen", version, about = "Structured Text generation with retrieval and compiler feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Knowledge-base maintenance.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Compile one source file and print its diagnostics.
    StCheck(CheckArgs),
    /// Benchmark runs.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run the pipeline on a single task.
    Run(RunArgs),
}

#[derive(Debug, Subcommand)]
pub enum KbCommand {
    /// Load a record file and report every rejected record.
    Validate(ValidateArgs),
    /// Ask the model for an index entry of every API and write the library back.
    Index(IndexArgs),
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    Run(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KbKind {
    Apilib,
    Cases,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
    /// Record kind; guessed from the first record when omitted.
    #[arg(long, value_enum)]
    pub kind: Option<KbKind>,
    /// Library used to check the APIs named by cases.
    #[arg(long)]
    pub apilib: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    pub apilib: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub dialect: String,
    #[arg(long)]
    pub dialects_dir: Option<PathBuf>,
    /// Vendor functions known to the checker.
    #[arg(long)]
    pub apilib: Option<PathBuf>,
    /// External compiler command; `{source_file}` is replaced by the file path.
    #[arg(long)]
    pub external: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct KbArgs {
    #[arg(long)]
    pub apilib: Option<PathBuf>,
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Precomputed vectors for case ranking; lexical ranking without it.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub dialects_dir: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub external: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GatewayArgs {
    /// Answer every model call from a transcript; no network access.
    #[arg(long, conflicts_with = "record")]
    pub replay: Option<PathBuf>,
    /// Call the live endpoint and append every interaction to a transcript.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Price per 1000 prompt tokens.
    #[arg(long, default_value_t = 0.0)]
    pub price_prompt: f64,
    /// Price per 1000 completion tokens.
    #[arg(long, default_value_t = 0.0)]
    pub price_completion: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub no_planning: bool,
    #[arg(long)]
    pub no_cases: bool,
    #[arg(long)]
    pub no_api_rec: bool,
    #[arg(long)]
    pub no_self_improve: bool,
    #[arg(long, default_value_t = 3)]
    pub max_iterations: u32,
}

impl AblationArgs {
    pub fn ablation(&self) -> Ablation {
        Ablation {
            planning: !self.no_planning,
            cases: !self.no_cases,
            api_rec: !self.no_api_rec,
            self_improve: !self.no_self_improve,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub tasks: PathBuf,
    #[arg(long)]
    pub dialect: String,
    #[command(flatten)]
    pub ablation: AblationArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub kb: KbArgs,
    #[command(flatten)]
    pub gateway: GatewayArgs,
    /// Directory for results.json, metrics.json and per-task artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file holding one task.
    pub task: PathBuf,
    #[arg(long)]
    pub dialect: String,
    #[command(flatten)]
    pub ablation: AblationArgs,
    #[command(flatten)]
    pub kb: KbArgs,
    #[command(flatten)]
    pub gateway: GatewayArgs,
    /// Artifact directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything a run reads, loaded once.
pub struct Setup {
    pub dialect: Arc<DialectProfile>,
    pub apilib: ApiLib,
    pub cases: CaseStore,
    pub embeddings: Option<FixtureEmbeddings>,
    pub compiler: CompilerAdapter,
    pub templates: Templates,
}

pub fn load_dialect(id: &str, dir: Option<&Path>) -> Result<Arc<DialectProfile>> {
    let mut registry = DialectRegistry::builtin();
    if let Some(d) = dir {
        registry.load_dir(d)?;
    }
    Ok(registry.get(id)?)
}

fn compiler(external: Option<&str>) -> CompilerAdapter {
    match external {
        Some(cmd) => CompilerAdapter::External(ExternalCompiler::new(cmd)),
        None => CompilerAdapter::Builtin,
    }
}

impl Setup {
    pub fn load(dialect: &str, kb: &KbArgs) -> Result<Setup> {
        let dialect = load_dialect(dialect, kb.dialects_dir.as_deref())?;
        let apilib = match &kb.apilib {
            Some(p) => load_apilib(p)?,
            None => ApiLib::default(),
        };
        let cases = match &kb.cases {
            Some(p) => {
                let store = load_rq2st(p, &apilib)?;
                for r in store.rejected() {
                    tracing::warn!(line = r.line, "case rejected: {}", r.reason);
                }
                store
            }
            None => CaseStore::default(),
        };
        let embeddings = kb.embeddings.as_deref().map(FixtureEmbeddings::load).transpose()?;
        let templates = match &kb.templates {
            Some(d) => Templates::with_overrides(d)?,
            None => Templates::default(),
        };
        Ok(Setup { dialect, apilib, cases, embeddings, compiler: compiler(kb.external.as_deref()), templates })
    }

    pub fn resources(&self) -> Resources<'_> {
        Resources {
            dialect: &self.dialect,
            apilib: &self.apilib,
            cases: &self.cases,
            embeddings: self.embeddings.as_ref().map(|e| e as &dyn EmbeddingProvider),
            compiler: &self.compiler,
            templates: &self.templates,
        }
    }
}

/// Replay, record-over-live, or live from the environment.
pub fn gateway(args: &GatewayArgs) -> Result<Box<dyn LlmGateway>> {
    if let Some(t) = &args.replay {
        return Ok(Box::new(ReplayGateway::open(t)?));
    }
    let live = LiveGateway::new(LiveConfig::from_env()?, ReqwestTransport::new()?);
    match &args.record {
        Some(t) => Ok(Box::new(RecordingGateway::open(live, t)?)),
        None => Ok(Box::new(live)),
    }
}

fn pricing(args: &GatewayArgs) -> Pricing {
    Pricing { prompt_per_1k: args.price_prompt, completion_per_1k: args.price_completion }
}

/// Fills an empty vendor target from `--dialect` and refuses a mismatch.
pub fn target_task(task: &mut Task, dialect: &str) -> Result<()> {
    if task.vendor_target.is_empty() {
        task.vendor_target = dialect.to_string();
    } else if task.vendor_target != dialect {
        bail!("task `{}` targets dialect `{}` but --dialect is `{dialect}`", task.name, task.vendor_target);
    }
    Ok(())
}

/// Exit codes: 0 success, 1 failed check or rejected records, 2 usage or
/// configuration error.
pub fn run(cli: Cli) -> u8 {
    let out = match cli.command {
        Command::Kb(KbCommand::Validate(a)) => validate(&a),
        Command::Kb(KbCommand::Index(a)) => index(&a),
        Command::StCheck(a) => st_check(&a),
        Command::Bench(BenchCommand::Run(a)) => bench(&a),
        Command::Run(a) => single(&a),
    };
    out.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        2
    })
}

pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn guess_kind(path: &Path) -> Result<KbKind> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("{}");
    let v: serde_json::Value = serde_json::from_str(first).unwrap_or(serde_json::Value::Null);
    Ok(if v.get("code").is_some() || v.get("task").is_some() { KbKind::Cases } else { KbKind::Apilib })
}

fn validate(a: &ValidateArgs) -> Result<u8> {
    let kind = match a.kind {
        Some(k) => k,
        None => guess_kind(&a.path)?,
    };
    match kind {
        KbKind::Apilib => match load_apilib(&a.path) {
            Ok(lib) => {
                let unindexed = lib.entries().iter().filter(|e| e.index.is_none()).count();
                println!("{}: {} APIs, {} without index", a.path.display(), lib.len(), unindexed);
                Ok(0)
            }
            Err(e) => {
                println!("rejected: {e}");
                Ok(1)
            }
        },
        KbKind::Cases => {
            let lib = match &a.apilib {
                Some(p) => load_apilib(p)?,
                None => ApiLib::default(),
            };
            let store = load_rq2st(&a.path, &lib)?;
            for c in store.cases() {
                for f in &c.flags {
                    println!("flag {}: {}", c.record.id, serde_json::to_string(f)?);
                }
            }
            for r in store.rejected() {
                println!("rejected line {}{}: {}", r.line, r.id.as_ref().map(|i| format!(" ({i})")).unwrap_or_default(), r.reason);
            }
            println!("{}: {} cases, {} rejected", a.path.display(), store.len(), store.rejected().len());
            Ok(if store.rejected().is_empty() { 0 } else { 1 })
        }
    }
}

fn index(a: &IndexArgs) -> Result<u8> {
    let lib = load_apilib(&a.apilib)?;
    let templates = match &a.templates {
        Some(d) => Templates::with_overrides(d)?,
        None => Templates::default(),
    };
    let llm = gateway(&a.gateway)?;
    let indexes = build_index(lib.entries(), &llm, &templates)?;
    let mut entries = lib.entries().to_vec();
    let mut missing = 0;
    for (e, ix) in entries.iter_mut().zip(indexes) {
        match ix {
            Some(ix) => e.index = Some(ix),
            None => missing += 1,
        }
    }
    let out = ApiLib::from_entries(entries)?;
    fs::write(&a.out, out.to_jsonl()).with_context(|| format!("writing {}", a.out.display()))?;
    println!("indexed {} of {} APIs into {}", out.len() - missing, out.len(), a.out.display());
    Ok(0)
}

fn st_check(a: &CheckArgs) -> Result<u8> {
    let dialect = load_dialect(&a.dialect, a.dialects_dir.as_deref())?;
    let lib = match &a.apilib {
        Some(p) => load_apilib(p)?,
        None => ApiLib::default(),
    };
    let source = fs::read_to_string(&a.file).with_context(|| format!("reading {}", a.file.display()))?;
    let report = compile(&source, &compiler(a.external.as_deref()), &dialect, &lib)?;
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Human => {
            for d in &report.diagnostics {
                println!("{}:{d}", a.file.display());
            }
            println!("{}", if report.pass { "pass" } else { "fail" });
        }
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn config(ab: &AblationArgs, gw: &GatewayArgs, artifacts: Option<PathBuf>) -> PipelineConfig {
    PipelineConfig {
        ablation: ab.ablation(),
        max_iterations: ab.max_iterations,
        pricing: pricing(gw),
        artifacts_dir: artifacts,
    }
}

fn bench(a: &BenchArgs) -> Result<u8> {
    let mut tasks: Vec<Task> = load_tasks(&a.tasks)?.into_iter().map(|b| b.task).collect();
    for t in &mut tasks {
        target_task(t, &a.dialect)?;
    }
    let setup = Setup::load(&a.dialect, &a.kb)?;
    let llm = gateway(&a.gateway)?;
    let cfg = config(&a.ablation, &a.gateway, a.out.as_ref().map(|d| d.join("tasks")));
    let run = run_benchmark(&tasks, &setup.resources(), &llm, &cfg, a.workers)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.json"), serde_json::to_string_pretty(&run)? + "\n")?;
        fs::write(dir.join("metrics.json"), report(&run.metrics, ReportFormat::Json) + "\n")?;
    }
    let fmt = match a.format {
        Format::Human => ReportFormat::Human,
        Format::Json => ReportFormat::Json,
    };
    println!("{}", report(&run.metrics, fmt).trim_end());
    Ok(0)
}

fn single(a: &RunArgs) -> Result<u8> {
    let text = fs::read_to_string(&a.task).with_context(|| format!("reading {}", a.task.display()))?;
    let mut task = serde_json::from_str::<BenchTask>(text.trim())
        .with_context(|| format!("parsing {}", a.task.display()))?
        .task;
    target_task(&mut task, &a.dialect)?;
    let setup = Setup::load(&a.dialect, &a.kb)?;
    let llm = gateway(&a.gateway)?;
    let cfg = config(&a.ablation, &a.gateway, None);
    let result = run_pipeline(&task, &setup.resources(), &llm, &cfg);
    if let Some(dir) = &a.out {
        persist_artifacts(dir, &result)?;
    }
    if let Some(src) = &result.final_source {
        println!("{}", src.trim_end());
    }
    for d in result.final_diagnostics() {
        println!("{d}");
    }
    println!(
        "{}: {:?}, {} repair rounds, {} model calls, cost {:.4}",
        task.name, result.outcome, result.iterations, result.usage.calls, result.usage.cost
    );
    Ok(match result.outcome {
        Outcome::Passed => 0,
        Outcome::Failed => 1,
        Outcome::Errored { .. } | Outcome::InfraFailed { .. } => 2,
    })
}
