//! `tlaprove` command line: corpus building, retrieval, proof search and
//! one-shot proof checking.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage error, 3 budget
//! exhausted, 4 environment error.

pub mod config;

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use tlaprove_core::corpus::{self, BuildReport, CorpusError, ExclusionSet};
use tlaprove_core::llm::{HttpBackend, HttpConfig, LlmBackend, LlmError, RecordingBackend, ReplayBackend, ScriptedBackend};
use tlaprove_core::orchestrator::{assemble_module, EventKind, Orchestrator, OrchestratorError, Outcome, RunConfig, RunLog};
use tlaprove_core::prompts::Templates;
use tlaprove_core::proof_ast::{parse_module, render_proof, Obligation};
use tlaprove_core::retrieval::{Embedder, RemoteEmbedder, RetrievalError, RetrievalIndex, TrigramEmbedder};
use tlaprove_core::verifier::{MockVerifier, TlapmConfig, TlapmVerifier, VerdictTable, Verifier, VerifierError};
use tlaprove_core::CorpusRecord;

use crate::config::{EmbedderConfig, ToolConfig};

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const EXHAUSTED: i32 = 3;
    pub const ENVIRONMENT: i32 = 4;
}

pub const LLM_URL_ENV: &str = "TLAPROVE_LLM_URL";
pub const LLM_MODEL_ENV: &str = "TLAPROVE_LLM_MODEL";

#[derive(Debug, Parser)]
#[command(name = "tlaprove", version, about = "Decomposition-driven proof generation for TLAPS")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "TLAPROVE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract proof statements from `.tla` files into a corpus file.
    BuildCorpus(BuildCorpusArgs),
    /// Print the corpus statements most similar to a query.
    Retrieve(RetrieveArgs),
    /// Search for a proof of an obligation.
    Prove(ProveArgs),
    /// Check a single proof with the verifier.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// Directories or files to scan for `.tla` modules.
    #[arg(required = true)]
    pub roots: Vec<PathBuf>,
    /// Exclusion file with `path:<glob>` and `theorem:<glob>` lines.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Store records without embeddings.
    #[arg(long)]
    pub no_embed: bool,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    pub query: String,
    #[arg(long, env = "TLAPROVE_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long, short, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ObligationArgs {
    /// Obligation file: JSON `{name, assertion, definitions, extends}` or a
    /// `.tla` module.
    pub obligation: PathBuf,
    /// Take the named theorem from a `.tla` module as the obligation.
    #[arg(long, value_name = "THEOREM")]
    pub from_module: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifierArgs {
    /// `mock:<verdicts.json>`, `tlapm` or `tlapm:<executable>`.
    #[arg(long, env = "TLAPROVE_VERIFIER")]
    pub verifier: Option<String>,
    /// Keep generated modules and prover output under this directory.
    #[arg(long, num_args = 0..=1, default_missing_value = "tlaprove-artifacts", value_name = "DIR")]
    pub keep_artifacts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProveArgs {
    #[command(flatten)]
    pub obligation: ObligationArgs,
    #[command(flatten)]
    pub verifier: VerifierArgs,
    /// `http`, `replay:<transcript.jsonl>` or `script:<responses.json>`.
    #[arg(long, env = "TLAPROVE_LLM")]
    pub llm: Option<String>,
    #[arg(long, env = "TLAPROVE_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long, env = "TLAPROVE_TEMPLATES")]
    pub templates: Option<PathBuf>,
    #[arg(long, short, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub candidates: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_attempts: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_total_attempts: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_depth: Option<u32>,
    /// Re-ask with the plain decomposition prompt instead of refining.
    #[arg(long)]
    pub no_refinement: bool,
    #[arg(long)]
    pub concurrent_siblings: bool,
    /// Proof module to write; defaults to `<name>_Proof.tla`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Run log to write; defaults to the proof path with `.runlog.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Record every LLM exchange to a transcript usable with `replay:`.
    #[arg(long)]
    pub record_transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub obligation: ObligationArgs,
    /// Proof body or module; defaults to the theorem's own proof when the
    /// obligation comes from a module.
    pub proof: Option<PathBuf>,
    #[command(flatten)]
    pub verifier: VerifierArgs,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn env(message: impl Display) -> Self {
        Self::new(exit::ENVIRONMENT, message)
    }

    fn usage(message: impl Display) -> Self {
        Self::new(exit::USAGE, message)
    }
}

type CmdResult = Result<i32, Failure>;

/// Runs the command line and returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{text}");
                exit::OK
            } else {
                let _ = write!(err, "{text}");
                exit::USAGE
            };
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let config = match &cli.config {
        Some(p) => ToolConfig::load(p).map_err(Failure::env)?,
        None => ToolConfig::default(),
    };
    init_logging(cli.verbose, config.log_level.as_deref());
    match cli.command {
        Command::BuildCorpus(a) => cmd_build_corpus(&a, &config, out, err),
        Command::Retrieve(a) => cmd_retrieve(&a, &config, out),
        Command::Prove(a) => cmd_prove(&a, &config, out, err),
        Command::Check(a) => cmd_check(&a, &config, out),
    }
}

fn init_logging(verbose: u8, configured: Option<&str>) {
    let level = match verbose {
        0 => configured
            .and_then(|l| l.parse().ok())
            .unwrap_or(log::LevelFilter::Warn),
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
}

fn io_fail(e: std::io::Error) -> Failure {
    Failure::env(e)
}

// ---------------------------------------------------------------------------
// Wiring

fn make_embedder(cfg: &ToolConfig) -> Result<Box<dyn Embedder<f64>>, Failure> {
    Ok(match &cfg.embedder {
        EmbedderConfig::Trigram { dimension } => Box::new(TrigramEmbedder::new(*dimension)),
        EmbedderConfig::Remote {
            url,
            model,
            dimension,
            batch_size,
        } => {
            let mut e = RemoteEmbedder::new(url.clone(), model.clone(), *dimension)
                .map_err(Failure::env)?
                .with_api_key(std::env::var(tlaprove_core::llm::API_KEY_ENV).ok());
            if let Some(b) = batch_size {
                e = e.with_batching(*b, 4);
            }
            Box::new(e)
        }
    })
}

fn make_llm(spec: Option<&str>, cfg: &ToolConfig) -> Result<Arc<dyn LlmBackend>, Failure> {
    let spec = spec.or(cfg.llm.as_deref()).unwrap_or("http");
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "http" => {
            let url = std::env::var(LLM_URL_ENV)
                .ok()
                .or_else(|| cfg.http.url.clone())
                .ok_or_else(|| Failure::env(format!("the http backend needs an endpoint URL ({LLM_URL_ENV} or [http] url)")))?;
            let model = std::env::var(LLM_MODEL_ENV)
                .ok()
                .or_else(|| cfg.http.model.clone())
                .ok_or_else(|| Failure::env(format!("the http backend needs a model ({LLM_MODEL_ENV} or [http] model)")))?;
            let mut h = HttpConfig::new(if arg.is_empty() { url } else { arg.to_string() }, model);
            if let Some(t) = cfg.http.timeout_secs {
                h.timeout = Duration::from_secs(t);
            }
            if let Some(r) = cfg.http.retries {
                h.retries = r;
            }
            if let Some(m) = cfg.http.max_in_flight {
                h.max_in_flight = m;
            }
            Ok(Arc::new(HttpBackend::new(h).map_err(Failure::env)?))
        }
        "replay" => {
            let path = require_path(arg, "replay transcript")?;
            Ok(Arc::new(ReplayBackend::from_path(&path).map_err(Failure::env)?))
        }
        "script" => {
            let path = require_path(arg, "script")?;
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::env(format!("{}: {e}", path.display())))?;
            let responses: Vec<String> =
                serde_json::from_str(&text).map_err(|e| Failure::env(format!("{}: {e}", path.display())))?;
            Ok(Arc::new(ScriptedBackend::new(responses)))
        }
        other => Err(Failure::usage(format!("unknown LLM backend {other:?}; expected http, replay:<path> or script:<path>"))),
    }
}

fn require_path(arg: &str, what: &str) -> Result<PathBuf, Failure> {
    if arg.is_empty() {
        return Err(Failure::usage(format!("{what} path missing")));
    }
    let p = PathBuf::from(arg);
    if !p.exists() {
        return Err(Failure::env(format!("{what} {} does not exist", p.display())));
    }
    Ok(p)
}

fn make_verifier(a: &VerifierArgs, cfg: &ToolConfig) -> Result<Box<dyn Verifier>, Failure> {
    let spec = a.verifier.as_deref().or(cfg.verifier.as_deref()).unwrap_or("tlapm");
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "mock" => {
            let path = require_path(arg, "verdict table")?;
            Ok(Box::new(MockVerifier::new(VerdictTable::load(&path).map_err(Failure::env)?)))
        }
        "tlapm" => {
            let mut t = TlapmConfig::default();
            if let Some(e) = &cfg.tlapm.executable {
                if std::env::var_os(tlaprove_core::verifier::TLAPM_PATH_ENV).is_none() {
                    t.executable = e.clone();
                }
            }
            if !arg.is_empty() {
                t.executable = PathBuf::from(arg);
            }
            if let Some(args) = &cfg.tlapm.args {
                t.args = args.clone();
            }
            if let Some(s) = cfg.tlapm.timeout_secs {
                t.timeout = Duration::from_secs(s);
            }
            if let Some(m) = cfg.tlapm.max_concurrent {
                t.max_concurrent = m.max(1);
            }
            t.artifacts_dir = a.keep_artifacts.clone();
            Ok(Box::new(TlapmVerifier::new(t)))
        }
        other => Err(Failure::usage(format!("unknown verifier {other:?}; expected mock:<path> or tlapm[:path]"))),
    }
}

/// The obligation plus, for module input, the theorem's own proof text.
pub fn load_obligation(path: &Path, theorem: Option<&str>) -> Result<(Obligation, Option<String>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::env(format!("{}: {e}", path.display())))?;
    let is_module = theorem.is_some() || path.extension().is_some_and(|e| e == "tla");
    if !is_module {
        let obl: Obligation =
            serde_json::from_str(&text).map_err(|e| Failure::env(format!("{}: {e}", path.display())))?;
        obl.validate().map_err(|e| Failure::env(format!("{}: {e}", path.display())))?;
        return Ok((obl, None));
    }
    let module = parse_module(&text).map_err(|e| Failure::env(format!("{}: {e}", path.display())))?;
    let thm = match theorem {
        Some(name) => module
            .theorem(name)
            .ok_or_else(|| Failure::env(format!("{}: no theorem named {name}", path.display())))?,
        None => match module.theorems.as_slice() {
            [only] => only,
            _ => {
                return Err(Failure::usage(format!(
                    "{} has {} theorems; pick one with --from-module",
                    path.display(),
                    module.theorems.len()
                )))
            }
        },
    };
    let proof = (!thm.proof.proof_body.is_empty() || !thm.proof.children.is_empty())
        .then(|| render_proof(&thm.proof).ok())
        .flatten();
    Ok((thm.to_obligation(&module), proof))
}

fn load_index(
    path: Option<&Path>,
    embedder: &dyn Embedder<f64>,
) -> Result<Option<RetrievalIndex<f64>>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let records: Vec<CorpusRecord> = corpus::load_corpus(path).map_err(Failure::env)?;
    if records.is_empty() {
        log::warn!("corpus {} is empty; proving without references", path.display());
        return Ok(None);
    }
    RetrievalIndex::build(records, embedder).map(Some).map_err(Failure::env)
}

// ---------------------------------------------------------------------------
// Commands

pub fn cmd_build_corpus(a: &BuildCorpusArgs, cfg: &ToolConfig, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let exclusions = match &a.exclusions {
        Some(p) => ExclusionSet::load(p).map_err(Failure::env)?,
        None => ExclusionSet::none(),
    };
    let (mut records, report): (Vec<CorpusRecord>, BuildReport) = match corpus::build_corpus_with_report(&a.roots, &exclusions) {
        Ok(r) => r,
        Err(e @ CorpusError::NoInputFiles(_)) => return Err(Failure::new(exit::FAILURE, e)),
        Err(e) => return Err(Failure::env(e)),
    };
    for (path, reason) in &report.files_skipped {
        writeln!(err, "warning: skipped {}: {reason}", path.display()).map_err(io_fail)?;
    }
    if !a.no_embed && !records.is_empty() {
        let embedder = make_embedder(cfg)?;
        corpus::embed_records(&mut records, embedder.as_ref()).map_err(Failure::env)?;
    }
    if let Err(e) = corpus::save_corpus(&records, &a.out) {
        return Err(Failure::usage(format!("cannot write {}: {e}", a.out.display())));
    }
    if records.is_empty() {
        writeln!(err, "warning: the corpus is empty; every statement was excluded or unreadable").map_err(io_fail)?;
    }
    writeln!(
        out,
        "{} records ({} files, {} excluded files, {} excluded statements, {} duplicates) -> {}",
        records.len(),
        report.files_found,
        report.files_excluded,
        report.statements_excluded,
        report.duplicates,
        a.out.display()
    )
    .map_err(io_fail)?;
    Ok(exit::OK)
}

pub fn cmd_retrieve(a: &RetrieveArgs, cfg: &ToolConfig, out: &mut dyn Write) -> CmdResult {
    let path = a
        .corpus
        .as_ref()
        .or(cfg.corpus.as_ref())
        .ok_or_else(|| Failure::usage("no corpus given (--corpus or config `corpus`)"))?;
    let k = a.k.map_or(cfg.run.retrieval_k, |k| k as usize);
    let embedder = make_embedder(cfg)?;
    let records: Vec<CorpusRecord> = corpus::load_corpus(path).map_err(Failure::env)?;
    let index = match RetrievalIndex::build(records, embedder.as_ref()) {
        Ok(i) => i,
        Err(e @ RetrievalError::EmptyCorpus) => return Err(Failure::new(exit::FAILURE, e)),
        Err(e) => return Err(Failure::env(e)),
    };
    let refs = match index.search_text(&a.query, k, embedder.as_ref()) {
        Ok(r) => r,
        Err(e @ RetrievalError::EmbedderUnavailable(_)) => return Err(Failure::env(e)),
        Err(e) => return Err(Failure::new(exit::FAILURE, e)),
    };
    for e in &refs.entries {
        let s = &e.record.statement;
        let source = match &s.source.theorem {
            Some(t) => format!("{}#{t}", s.source.path),
            None => s.source.path.clone(),
        };
        writeln!(out, "{:.6}\t{}\t{}", e.score, source, s.normalized_text).map_err(io_fail)?;
    }
    Ok(exit::OK)
}

fn run_config(a: &ProveArgs, cfg: &ToolConfig) -> RunConfig {
    let mut rc = cfg.run.clone();
    if let Some(k) = a.k {
        rc.retrieval_k = k as usize;
    }
    if let Some(n) = a.candidates {
        rc.n_candidates = n as usize;
    }
    if let Some(m) = a.max_attempts {
        rc.max_decomposition_attempts_per_obligation = m;
    }
    if let Some(m) = a.max_total_attempts {
        rc.max_total_decomposition_attempts = Some(m);
    }
    if let Some(d) = a.max_depth {
        rc.max_depth = d;
    }
    if a.no_refinement {
        rc.refinement_enabled = false;
    }
    if a.concurrent_siblings {
        rc.concurrent_siblings = true;
    }
    rc
}

fn module_name_for(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut name: String = stem.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if !name.starts_with(|c: char| c.is_ascii_alphabetic()) {
        name.insert_str(0, "M_");
    }
    name
}

fn is_environment_error(e: &OrchestratorError) -> bool {
    match e {
        OrchestratorError::Configuration(_) | OrchestratorError::Retrieval(_) => true,
        OrchestratorError::Llm(l) => !matches!(l, LlmError::AllCandidatesFailed(_)),
        OrchestratorError::Verifier(v) => matches!(
            v,
            VerifierError::ProverNotFound(_) | VerifierError::WorkingDir(_) | VerifierError::VerdictTable(_)
        ),
        _ => false,
    }
}

pub fn cmd_prove(a: &ProveArgs, cfg: &ToolConfig, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let (goal, _) = load_obligation(&a.obligation.obligation, a.obligation.from_module.as_deref())?;
    let rc = run_config(a, cfg);
    rc.validate().map_err(Failure::env)?;
    let templates = match a.templates.as_ref().or(cfg.template_dir.as_ref()) {
        Some(dir) => Templates::from_dir(dir).map_err(Failure::env)?,
        None => Templates::builtin(),
    };
    let embedder = make_embedder(cfg)?;
    let index = load_index(a.corpus.as_deref().or(cfg.corpus.as_deref()), embedder.as_ref())?;
    let llm = make_llm(a.llm.as_deref(), cfg)?;
    let recorder = a.record_transcript.as_ref().map(|_| RecordingBackend::new(llm.clone()));
    let backend: &dyn LlmBackend = match &recorder {
        Some(r) => r,
        None => llm.as_ref(),
    };
    let verifier = make_verifier(&a.verifier, cfg)?;

    let mut orch: Orchestrator = Orchestrator::new(backend, verifier.as_ref(), rc).with_templates(templates);
    if let Some(index) = &index {
        orch = orch.with_retrieval(index, embedder.as_ref());
    }

    let out_path = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}_Proof.tla", module_name_for(Path::new(&goal.name)))));
    let log_path = a.log.clone().unwrap_or_else(|| out_path.with_extension("runlog.jsonl"));
    for p in [&out_path, &log_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Failure::env(format!("{}: {e}", dir.display())))?;
        }
    }
    let result = orch.prove(&goal);

    if let (Some(path), Some(r)) = (&a.record_transcript, &recorder) {
        r.transcript().save(path).map_err(Failure::env)?;
    }
    let log: &RunLog = match &result {
        Ok(r) => &r.log,
        Err(f) => &f.log,
    };
    std::fs::write(&log_path, log.to_jsonl(true)).map_err(|e| Failure::env(format!("{}: {e}", log_path.display())))?;

    let result = match result {
        Ok(r) => r,
        Err(f) => {
            let code = if is_environment_error(&f.error) { exit::ENVIRONMENT } else { exit::FAILURE };
            return Err(Failure::new(code, f.error));
        }
    };
    let attempts = result
        .log
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::DecompositionChecked { .. }))
        .count();
    match result.outcome {
        Outcome::Complete => {
            let module = assemble_module(&module_name_for(&out_path), &goal, &result.tree)
                .map_err(|e| Failure::new(exit::FAILURE, e))?;
            std::fs::write(&out_path, &module.text)
                .map_err(|e| Failure::env(format!("{}: {e}", out_path.display())))?;
            writeln!(
                out,
                "Complete: {} ({} steps, depth {}, {} decomposition checks)\nrun log: {}",
                out_path.display(),
                result.tree.step_count(),
                result.tree.depth(),
                attempts,
                log_path.display()
            )
            .map_err(io_fail)?;
            Ok(exit::OK)
        }
        Outcome::Exhausted => {
            writeln!(out, "Exhausted after {attempts} decomposition checks\nrun log: {}", log_path.display())
                .map_err(io_fail)?;
            writeln!(err, "no proof found within the configured budgets").map_err(io_fail)?;
            Ok(exit::EXHAUSTED)
        }
    }
}

pub fn cmd_check(a: &CheckArgs, cfg: &ToolConfig, out: &mut dyn Write) -> CmdResult {
    let (obl, own_proof) = load_obligation(&a.obligation.obligation, a.obligation.from_module.as_deref())?;
    let proof = match &a.proof {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::env(format!("{}: {e}", p.display())))?;
            proof_text_from(&text)
        }
        None => own_proof.ok_or_else(|| Failure::usage("no proof given and the obligation has none"))?,
    };
    let verifier = make_verifier(&a.verifier, cfg)?;
    let result = match verifier.check_proof(&obl, &proof) {
        Ok(r) => r,
        Err(e @ (VerifierError::ProverNotFound(_) | VerifierError::WorkingDir(_) | VerifierError::VerdictTable(_))) => {
            return Err(Failure::env(e))
        }
        Err(e) => return Err(Failure::new(exit::FAILURE, e)),
    };
    writeln!(out, "{:?} ({} ms)", result.overall, result.duration_ms).map_err(io_fail)?;
    for r in &result.per_obligation {
        writeln!(out, "{:?}\t{}\t{}", r.status, r.location.describe(), r.message.replace('\n', " ")).map_err(io_fail)?;
    }
    if !result.message.is_empty() {
        writeln!(out, "{}", result.message).map_err(io_fail)?;
    }
    Ok(if result.is_proved() { exit::OK } else { exit::FAILURE })
}

/// A proof file may hold a bare proof or a module with a single theorem.
fn proof_text_from(text: &str) -> String {
    if let Ok(m) = parse_module(text) {
        if let [t] = m.theorems.as_slice() {
            if let Ok(p) = render_proof(&t.proof) {
                return p;
            }
        }
    }
    text.to_string()
}
