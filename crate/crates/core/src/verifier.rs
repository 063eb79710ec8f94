//! Checking proofs and decompositions with TLAPS, or with a scripted table
//! when the prover is not available.
//!
//! Two checks are supported. The decomposition check renders the proposed
//! sub-obligations as `OMITTED` steps and asks the prover to discharge only
//! the `QED` step. The proof check wraps an obligation and a candidate proof
//! in a module and asks the prover to discharge everything.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::proof_ast::{
    decomposition_skeleton_module, parse_proof_text, render_obligation_module, Obligation, ProofAstError, ProofNode,
    RenderedModule, StepLabel,
};
use crate::prompts::DecompositionProposal;
use crate::text::normalize_whitespace;

pub const TLAPM_PATH_ENV: &str = "TLAPM_PATH";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
pub const DEFAULT_CONCURRENCY: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum VerifierError {
    #[error("prover executable not found: {0}")]
    ProverNotFound(String),
    #[error("working directory error: {0}")]
    WorkingDir(String),
    #[error("cannot render module: {0}")]
    ModuleRender(#[from] ProofAstError),
    #[error("tier {0:?} is not a mechanical prover tier")]
    NotMechanicalTier(ProverTier),
    #[error("empty proof body")]
    EmptyProof,
    #[error("verdict table: {0}")]
    VerdictTable(String),
}

pub type Result<T, E = VerifierError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Proved,
    Failed,
    Timeout,
    ToolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObligationStatus {
    Proved,
    Failed,
    Omitted,
    ToolError,
}

/// Where an obligation sits in the checked module.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Location {
    pub label: Option<StepLabel>,
    /// 1-based inclusive line span.
    pub lines: Option<(usize, usize)>,
    pub byte_range: Option<Range<usize>>,
}

impl Location {
    fn in_module(module: &RenderedModule, first: usize, last: usize) -> Self {
        Self {
            label: module.step_at_line(first).map(|s| s.label.clone()),
            lines: Some((first, last)),
            byte_range: Some(module.byte_range(first, last)),
        }
    }

    pub fn describe(&self) -> String {
        match (&self.label, self.lines) {
            (Some(l), _) => l.reference(),
            (None, Some((a, _))) => format!("line {a}"),
            (None, None) => "module".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationReport {
    pub location: Location,
    pub status: ObligationStatus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub overall: Verdict,
    pub per_obligation: Vec<ObligationReport>,
    /// Summary for non-proved outcomes; always nonempty for `Timeout` and
    /// `ToolError`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
    pub duration_ms: u64,
}

impl VerificationResult {
    /// Result whose verdict is derived from its obligations.
    pub fn from_obligations(per_obligation: Vec<ObligationReport>, duration_ms: u64) -> Self {
        let overall = if per_obligation.iter().all(|o| o.status == ObligationStatus::Proved) {
            Verdict::Proved
        } else {
            Verdict::Failed
        };
        Self {
            overall,
            per_obligation,
            message: String::new(),
            duration_ms,
        }
    }

    pub fn failed(message: impl Into<String>, per_obligation: Vec<ObligationReport>, duration_ms: u64) -> Self {
        Self {
            overall: Verdict::Failed,
            per_obligation,
            message: message.into(),
            duration_ms,
        }
    }

    pub fn timeout(message: impl Into<String>, duration_ms: u64) -> Self {
        Self::abnormal(Verdict::Timeout, message.into(), "prover timed out", duration_ms)
    }

    pub fn tool_error(message: impl Into<String>, duration_ms: u64) -> Self {
        Self::abnormal(Verdict::ToolError, message.into(), "prover error", duration_ms)
    }

    fn abnormal(overall: Verdict, message: String, fallback: &str, duration_ms: u64) -> Self {
        Self {
            overall,
            per_obligation: Vec::new(),
            message: if message.trim().is_empty() { fallback.into() } else { message },
            duration_ms,
        }
    }

    pub fn is_proved(&self) -> bool {
        self.overall == Verdict::Proved
    }

    pub fn failures(&self) -> impl Iterator<Item = &ObligationReport> {
        self.per_obligation.iter().filter(|o| o.status != ObligationStatus::Proved)
    }

    /// Human-readable failure description, used as refinement feedback.
    pub fn feedback(&self) -> String {
        let mut parts = Vec::new();
        if !self.message.trim().is_empty() {
            parts.push(self.message.trim().to_string());
        }
        for o in self.failures() {
            let status = format!("{:?}", o.status).to_lowercase();
            if o.message.trim().is_empty() {
                parts.push(format!("{}: {status}", o.location.describe()));
            } else {
                parts.push(format!("{}: {status}\n{}", o.location.describe(), o.message.trim_end()));
            }
        }
        parts.join("\n\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProverTier {
    Obvious,
    AllProvers,
    Llm,
}

impl ProverTier {
    pub const MECHANICAL: [ProverTier; 2] = [ProverTier::Obvious, ProverTier::AllProvers];

    /// The fixed proof body for a mechanical tier.
    pub fn proof_body(self) -> Option<&'static str> {
        match self {
            ProverTier::Obvious => Some("OBVIOUS"),
            ProverTier::AllProvers => Some("BY AllProvers"),
            ProverTier::Llm => None,
        }
    }
}

pub trait Verifier: Send + Sync {
    fn id(&self) -> String;

    fn check_decomposition(&self, obl: &Obligation, proposal: &DecompositionProposal) -> Result<VerificationResult>;

    fn check_proof(&self, obl: &Obligation, proof_body: &str) -> Result<VerificationResult>;

    fn try_tier(&self, obl: &Obligation, tier: ProverTier) -> Result<VerificationResult> {
        match tier.proof_body() {
            Some(body) => self.check_proof(obl, body),
            None => Err(VerifierError::NotMechanicalTier(tier)),
        }
    }
}

/// The decomposition-check module for `proposal`.
pub fn decomposition_module(obl: &Obligation, proposal: &DecompositionProposal) -> Result<RenderedModule> {
    let p = proposal.at_level(1);
    Ok(decomposition_skeleton_module(obl, &p.sub_obligations, &p.qed_clause)?)
}

/// The proof-check module for `obl` with `proof_body`, or the parse error
/// for a body that is not a well-formed proof.
pub fn proof_module(obl: &Obligation, proof_body: &str) -> Result<std::result::Result<RenderedModule, String>> {
    obl.validate()?;
    if proof_body.trim().is_empty() {
        return Err(VerifierError::EmptyProof);
    }
    let proof = match parse_proof_text(proof_body) {
        Ok(p) => p,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let mut proof = proof;
    if let Some(first) = proof.children.first().map(ProofNode::level) {
        if first > 1 {
            return Ok(Err(format!("proof must start at level 1, found <{first}>")));
        }
    }
    proof.set_status_recursive(Default::default());
    match render_obligation_module("ProofCheck", obl, &proof) {
        Ok(m) => Ok(Ok(m)),
        Err(e) => Ok(Err(e.to_string())),
    }
}

fn qed_span(module: &RenderedModule) -> Option<(usize, usize)> {
    let top = module.steps.first()?.label.level();
    module
        .steps
        .iter()
        .find(|s| s.label.level() == top && s.label.is_qed())
        .map(|s| (s.first_line, s.last_line))
}

// ---------------------------------------------------------------------------
// Mock

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Proof,
    Decomposition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictEntry {
    pub check: CheckKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assertion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subs: Option<Vec<String>>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

pub const VERDICTS_FORMAT: &str = "verdicts/1";

/// A verdict table: the first entry whose present fields all match (after
/// whitespace normalization) decides; otherwise `default` applies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictTable {
    pub format: String,
    #[serde(default = "default_verdict")]
    pub default: Verdict,
    #[serde(default)]
    pub entries: Vec<VerdictEntry>,
}

fn default_verdict() -> Verdict {
    Verdict::Failed
}

impl Default for VerdictTable {
    fn default() -> Self {
        Self {
            format: VERDICTS_FORMAT.into(),
            default: Verdict::Failed,
            entries: Vec::new(),
        }
    }
}

impl VerdictTable {
    pub fn parse(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text).map_err(|e| VerifierError::VerdictTable(e.to_string()))?;
        if table.format != VERDICTS_FORMAT {
            return Err(VerifierError::VerdictTable(format!(
                "unsupported format {:?}, expected {VERDICTS_FORMAT:?}",
                table.format
            )));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| VerifierError::VerdictTable(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn with_entry(mut self, entry: VerdictEntry) -> Self {
        self.entries.push(entry);
        self
    }

    fn lookup(&self, kind: CheckKind, assertion: &str, proof: Option<&str>, subs: Option<&[String]>) -> (Verdict, Option<&str>) {
        let same = |a: &str, b: &str| normalize_whitespace(a) == normalize_whitespace(b);
        for e in &self.entries {
            if e.check != kind {
                continue;
            }
            if e.assertion.as_deref().is_some_and(|a| !same(a, assertion)) {
                continue;
            }
            if let (Some(want), Some(got)) = (&e.proof, proof) {
                if !same(want, got) {
                    continue;
                }
            }
            if let (Some(want), Some(got)) = (&e.subs, subs) {
                if want.len() != got.len() || want.iter().zip(got).any(|(a, b)| !same(a, b)) {
                    continue;
                }
            }
            return (e.verdict, e.message.as_deref());
        }
        (self.default, None)
    }
}

/// Table-driven verifier for offline runs and tests.
#[derive(Debug, Default)]
pub struct MockVerifier {
    table: VerdictTable,
    calls: AtomicUsize,
}

impl MockVerifier {
    pub fn new(table: VerdictTable) -> Self {
        Self {
            table,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn result(verdict: Verdict, message: Option<&str>, location: Location) -> VerificationResult {
        let message = message.unwrap_or_default().to_string();
        let status = match verdict {
            Verdict::Proved => ObligationStatus::Proved,
            Verdict::Failed => ObligationStatus::Failed,
            Verdict::Timeout => return VerificationResult::timeout(message, 0),
            Verdict::ToolError => return VerificationResult::tool_error(message, 0),
        };
        VerificationResult::from_obligations(
            vec![ObligationReport {
                location,
                status,
                message,
            }],
            0,
        )
    }
}

impl Verifier for MockVerifier {
    fn id(&self) -> String {
        "mock".into()
    }

    fn check_decomposition(&self, obl: &Obligation, proposal: &DecompositionProposal) -> Result<VerificationResult> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let module = decomposition_module(obl, proposal)?;
        let subs: Vec<String> = proposal.sub_obligations.iter().map(|(_, a)| a.clone()).collect();
        let (verdict, message) = self
            .table
            .lookup(CheckKind::Decomposition, &obl.assertion, None, Some(&subs));
        let location = qed_span(&module)
            .map(|(a, b)| Location::in_module(&module, a, b))
            .unwrap_or_default();
        Ok(Self::result(verdict, message, location))
    }

    fn check_proof(&self, obl: &Obligation, proof_body: &str) -> Result<VerificationResult> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let module = match proof_module(obl, proof_body)? {
            Ok(m) => m,
            Err(parse) => return Ok(VerificationResult::failed(format!("proof does not parse: {parse}"), Vec::new(), 0)),
        };
        let (verdict, message) = self.table.lookup(CheckKind::Proof, &obl.assertion, Some(proof_body), None);
        let line = module.theorem_line;
        Ok(Self::result(verdict, message, Location::in_module(&module, line, line)))
    }
}

// ---------------------------------------------------------------------------
// Prover output

/// One obligation as reported by the prover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProverObligation {
    pub id: Option<String>,
    /// `(line, column, end line, end column)`, 1-based.
    pub loc: Option<(usize, usize, usize, usize)>,
    pub status: ObligationStatus,
    pub message: String,
}

fn parse_loc(v: &str) -> Option<(usize, usize, usize, usize)> {
    let n: Vec<usize> = v.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match n[..] {
        [a, b, c, d] => Some((a, b, c, d)),
        _ => None,
    }
}

fn status_of(raw: &str) -> ObligationStatus {
    match raw.trim() {
        "proved" | "trivial" => ObligationStatus::Proved,
        "omitted" => ObligationStatus::Omitted,
        "failed" | "interrupted" => ObligationStatus::Failed,
        _ => ObligationStatus::ToolError,
    }
}

/// Parses toolbox-protocol output (`@!!BEGIN` … `@!!END` blocks).
///
/// Status updates for one obligation id are folded into a single entry:
/// any `proved`/`trivial` update wins, otherwise the last update stands.
/// `error` blocks and blocks of unknown type become `ToolError` entries.
pub fn parse_prover_output(raw: &str) -> Vec<ProverObligation> {
    let mut out: Vec<ProverObligation> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut block: Option<Vec<(String, String)>> = None;
    for line in raw.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim() == "@!!BEGIN" {
            block = Some(Vec::new());
            continue;
        }
        if line.trim() == "@!!END" {
            if let Some(fields) = block.take() {
                absorb_block(&fields, &mut out, &mut by_id);
            }
            continue;
        }
        let Some(fields) = block.as_mut() else { continue };
        if let Some(rest) = line.strip_prefix("@!!") {
            let (k, v) = rest.split_once(':').unwrap_or((rest, ""));
            fields.push((k.trim().to_string(), v.to_string()));
        } else if let Some((_, v)) = fields.last_mut() {
            v.push('\n');
            v.push_str(line);
        }
    }
    out
}

fn absorb_block(fields: &[(String, String)], out: &mut Vec<ProverObligation>, by_id: &mut HashMap<String, usize>) {
    let get = |k: &str| fields.iter().find(|(n, _)| n == k).map(|(_, v)| v.as_str());
    let kind = get("type").unwrap_or("").trim();
    match kind {
        "obligation" => {
            let status_raw = get("status").unwrap_or("");
            let status = status_of(status_raw);
            let mut message = String::new();
            for key in ["reason", "msg", "obl"] {
                if let Some(v) = get(key) {
                    let v = v.trim();
                    if !v.is_empty() {
                        if !message.is_empty() {
                            message.push('\n');
                        }
                        message.push_str(v);
                    }
                }
            }
            if status == ObligationStatus::ToolError && message.is_empty() {
                message = format!("unfinished status {:?}", status_raw.trim());
            }
            let ob = ProverObligation {
                id: get("id").map(|s| s.trim().to_string()),
                loc: get("loc").and_then(parse_loc),
                status,
                message,
            };
            match ob.id.clone().and_then(|id| by_id.get(&id).copied().map(|i| (id, i))) {
                Some((_, i)) => {
                    let prev = &mut out[i];
                    if prev.status != ObligationStatus::Proved {
                        if ob.loc.is_some() {
                            prev.loc = ob.loc;
                        }
                        prev.status = ob.status;
                        if !ob.message.is_empty() || ob.status == ObligationStatus::Proved {
                            prev.message = ob.message;
                        }
                    }
                }
                None => {
                    if let Some(id) = &ob.id {
                        by_id.insert(id.clone(), out.len());
                    }
                    out.push(ob);
                }
            }
        }
        "obligationsnumber" | "warning" => {
            if kind == "warning" {
                log::warn!("prover warning: {}", get("msg").unwrap_or("").trim());
            }
        }
        _ => {
            let message = get("msg")
                .map(|m| m.trim().to_string())
                .unwrap_or_else(|| format!("unrecognised {kind:?} block"));
            out.push(ProverObligation {
                id: None,
                loc: get("loc").and_then(parse_loc),
                status: ObligationStatus::ToolError,
                message,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// tlapm

#[derive(Debug, Clone)]
pub struct TlapmConfig {
    pub executable: PathBuf,
    /// Arguments; `{file}` is replaced by the module file name.
    pub args: Vec<String>,
    pub timeout: Duration,
    pub max_concurrent: usize,
    /// When set, working directories are created here and kept.
    pub artifacts_dir: Option<PathBuf>,
}

impl Default for TlapmConfig {
    fn default() -> Self {
        Self {
            executable: std::env::var_os(TLAPM_PATH_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("tlapm")),
            args: ["--toolbox", "0", "0", "{file}"].map(String::from).to_vec(),
            timeout: DEFAULT_TIMEOUT,
            max_concurrent: DEFAULT_CONCURRENCY,
            artifacts_dir: None,
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Raw outcome of one prover process.
struct Run {
    stdout: String,
    stderr: String,
    success: bool,
    timed_out: bool,
    elapsed: Duration,
}

/// Runs `tlapm` on generated modules.
pub struct TlapmVerifier {
    config: TlapmConfig,
    slots: Semaphore,
}

impl TlapmVerifier {
    pub fn new(config: TlapmConfig) -> Self {
        let slots = Semaphore::new(config.max_concurrent);
        Self { config, slots }
    }

    pub fn config(&self) -> &TlapmConfig {
        &self.config
    }

    fn workdir(&self) -> Result<(PathBuf, Option<tempfile::TempDir>)> {
        let err = |e: std::io::Error| VerifierError::WorkingDir(e.to_string());
        match &self.config.artifacts_dir {
            Some(base) => {
                fs::create_dir_all(base).map_err(err)?;
                let dir = tempfile::Builder::new().prefix("check-").tempdir_in(base).map_err(err)?;
                Ok((dir.keep(), None))
            }
            None => {
                let dir = tempfile::Builder::new().prefix("tlaprove-").tempdir().map_err(err)?;
                Ok((dir.path().to_path_buf(), Some(dir)))
            }
        }
    }

    fn run(&self, module: &RenderedModule) -> Result<Run> {
        let _slot = self.slots.acquire();
        let (dir, _guard) = self.workdir()?;
        let file = format!("{}.tla", module.module_name);
        fs::write(dir.join(&file), &module.text).map_err(|e| VerifierError::WorkingDir(e.to_string()))?;
        let args: Vec<String> = self.config.args.iter().map(|a| a.replace("{file}", &file)).collect();
        let mut cmd = Command::new(&self.config.executable);
        cmd.args(&args)
            .current_dir(&dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let started = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                VerifierError::ProverNotFound(format!("{}: {e}", self.config.executable.display()))
            }
            _ => VerifierError::WorkingDir(e.to_string()),
        })?;
        let drain = |pipe: Option<Box<dyn Read + Send>>| {
            std::thread::spawn(move || {
                let mut s = String::new();
                if let Some(mut p) = pipe {
                    let mut buf = Vec::new();
                    let _ = p.read_to_end(&mut buf);
                    s = String::from_utf8_lossy(&buf).into_owned();
                }
                s
            })
        };
        let out = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
        let err = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if started.elapsed() >= self.config.timeout => {
                    timed_out = true;
                    kill_tree(&mut child);
                    break child.wait().ok();
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(VerifierError::WorkingDir(e.to_string())),
            }
        };
        let elapsed = started.elapsed();
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        if self.config.artifacts_dir.is_some() {
            let _ = fs::write(dir.join("prover.out"), format!("{stdout}{stderr}"));
        }
        Ok(Run {
            stdout,
            stderr,
            success: status.is_some_and(|s| s.success()),
            timed_out,
            elapsed,
        })
    }

    fn reports(module: &RenderedModule, run: &Run) -> Vec<ObligationReport> {
        // tlapm writes the toolbox protocol to stderr on some builds.
        let combined = format!("{}\n{}", run.stdout, run.stderr);
        parse_prover_output(&combined)
            .into_iter()
            .map(|o| ObligationReport {
                location: match o.loc {
                    Some((l1, _, l2, _)) => Location::in_module(module, l1, l2),
                    None => Location::default(),
                },
                status: o.status,
                message: o.message,
            })
            .collect()
    }

    fn abnormal(run: &Run, reports: &[ObligationReport]) -> Option<VerificationResult> {
        let ms = run.elapsed.as_millis() as u64;
        if run.timed_out {
            return Some(VerificationResult::timeout(
                format!("prover exceeded {:.0} s", run.elapsed.as_secs_f64()),
                ms,
            ));
        }
        if reports.is_empty() && !run.success {
            let tail: String = run.stderr.trim().chars().rev().take(2000).collect::<Vec<_>>().into_iter().rev().collect();
            return Some(VerificationResult::tool_error(
                if tail.is_empty() { "prover exited abnormally without output".into() } else { tail },
                ms,
            ));
        }
        None
    }
}

#[cfg(unix)]
fn kill_tree(child: &mut std::process::Child) {
    // The child leads its own process group, so this also reaches the
    // back-end provers it spawned.
    let _ = Command::new("kill")
        .args(["-KILL", "--", &format!("-{}", child.id())])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status();
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut std::process::Child) {
    let _ = child.kill();
}

impl Verifier for TlapmVerifier {
    fn id(&self) -> String {
        format!("tlapm:{}", self.config.executable.display())
    }

    fn check_decomposition(&self, obl: &Obligation, proposal: &DecompositionProposal) -> Result<VerificationResult> {
        let module = decomposition_module(obl, proposal)?;
        let run = self.run(&module)?;
        let reports = Self::reports(&module, &run);
        if let Some(r) = Self::abnormal(&run, &reports) {
            return Ok(r);
        }
        let ms = run.elapsed.as_millis() as u64;
        let Some((first, last)) = qed_span(&module) else {
            return Ok(VerificationResult::tool_error("decomposition module has no QED step", ms));
        };
        let (qed, other): (Vec<_>, Vec<_>) = reports.into_iter().partition(|r| {
            r.location
                .lines
                .is_some_and(|(a, _)| a >= first && a <= last)
        });
        let errors: Vec<ObligationReport> = other
            .into_iter()
            .filter(|r| r.status == ObligationStatus::ToolError)
            .collect();
        if qed.is_empty() {
            return Ok(VerificationResult::failed(
                "prover reported no obligation for the QED step",
                errors,
                ms,
            ));
        }
        let mut per = qed;
        per.extend(errors);
        Ok(VerificationResult::from_obligations(per, ms))
    }

    fn check_proof(&self, obl: &Obligation, proof_body: &str) -> Result<VerificationResult> {
        let module = match proof_module(obl, proof_body)? {
            Ok(m) => m,
            Err(parse) => return Ok(VerificationResult::failed(format!("proof does not parse: {parse}"), Vec::new(), 0)),
        };
        let run = self.run(&module)?;
        let reports = Self::reports(&module, &run);
        if let Some(r) = Self::abnormal(&run, &reports) {
            return Ok(r);
        }
        let ms = run.elapsed.as_millis() as u64;
        if reports.is_empty() {
            return Ok(VerificationResult::failed("prover reported no obligations", Vec::new(), ms));
        }
        Ok(VerificationResult::from_obligations(reports, ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn even() -> Obligation {
        Obligation::new("EvenDouble", "Even(x + x)")
            .with_definition("Even(n) == n % 2 = 0")
            .with_extends("Naturals")
            .with_assume("NEW x \\in Nat")
    }

    fn proposal(subs: &[&str], qed: &str) -> DecompositionProposal {
        DecompositionProposal {
            echoed_obligation: "Even(x + x)".into(),
            reasoning: String::new(),
            proof_strategy: String::new(),
            sub_obligations: subs
                .iter()
                .enumerate()
                .map(|(i, s)| (StepLabel::numbered(1, i + 1), s.to_string()))
                .collect(),
            qed_clause: qed.into(),
        }
    }

    const PROVED: &str = "@!!BEGIN\n@!!type:obligationsnumber\n@!!count:1\n@!!END\n\
@!!BEGIN\n@!!type:obligation\n@!!id:1\n@!!loc:7:1:7:24\n@!!status:being proved\n@!!END\n\
@!!BEGIN\n@!!type:obligation\n@!!id:1\n@!!loc:7:1:7:24\n@!!status:proved\n@!!prover:zenon\n@!!already:false\n@!!END\n";

    const FAILED: &str = "@!!BEGIN\n@!!type:obligation\n@!!id:2\n@!!loc:9:3:9:31\n@!!status:failed\n@!!prover:smt\n\
@!!reason:false\n@!!already:false\n@!!obl:\nASSUME NEW x \\in Nat\nPROVE  Even(2 * x)\n\n@!!END\n";

    #[test]
    fn prover_output_examples() {
        assert!(parse_prover_output("").is_empty());
        let ok = parse_prover_output(PROVED);
        assert_eq!(ok.len(), 1);
        assert_eq!(ok[0].status, ObligationStatus::Proved);
        assert_eq!(ok[0].loc, Some((7, 1, 7, 24)));
        let bad = parse_prover_output(FAILED);
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].status, ObligationStatus::Failed);
        assert_eq!(bad[0].message, "false\nASSUME NEW x \\in Nat\nPROVE  Even(2 * x)");
        let unknown = parse_prover_output("@!!BEGIN\n@!!type:error\n@!!msg:Could not parse\n@!!END\n");
        assert_eq!(unknown[0].status, ObligationStatus::ToolError);
        assert_eq!(unknown[0].message, "Could not parse");
    }

    #[test]
    fn later_prover_success_wins() {
        let raw = format!("{FAILED}{}", FAILED.replace("status:failed", "status:proved"));
        let parsed = parse_prover_output(&raw);
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].status, ObligationStatus::Proved);
    }

    #[test]
    fn tiers_are_ordered() {
        assert!(ProverTier::Obvious < ProverTier::AllProvers && ProverTier::AllProvers < ProverTier::Llm);
        let v = MockVerifier::default();
        assert!(matches!(
            v.try_tier(&even(), ProverTier::Llm),
            Err(VerifierError::NotMechanicalTier(ProverTier::Llm))
        ));
    }

    #[test]
    fn mock_matches_normalized_entries() {
        let table = VerdictTable::parse(
            r#"{"format":"verdicts/1","entries":[
                {"check":"proof","assertion":"x + x = 2 * x","proof":"OBVIOUS","verdict":"Proved"},
                {"check":"decomposition","assertion":"Even(x + x)","subs":["x + x = 2 * x","Even(2 * x)"],"verdict":"Proved"},
                {"check":"proof","assertion":"Even(2 * x)","verdict":"Failed","message":"smt: false"}
            ]}"#,
        )
        .unwrap();
        let v = MockVerifier::new(table);
        let sub = even().child("s1", "x  +  x = 2 * x");
        assert!(v.check_proof(&sub, "OBVIOUS").unwrap().is_proved());
        assert!(!v.check_proof(&sub, "BY AllProvers").unwrap().is_proved());
        let r = v.check_proof(&even().child("s2", "Even(2 * x)"), "OBVIOUS").unwrap();
        assert_eq!(r.overall, Verdict::Failed);
        assert_eq!(r.per_obligation[0].message, "smt: false");
        let d = v
            .check_decomposition(&even(), &proposal(&["x + x = 2 * x", "Even(2 * x)"], "BY <1>1, <1>2 DEF Even"))
            .unwrap();
        assert!(d.is_proved());
        assert_eq!(d.per_obligation[0].location.label, Some(StepLabel::qed(1)));
        let wrong = v.check_decomposition(&even(), &proposal(&["TRUE"], "BY <1>1")).unwrap();
        assert_eq!(wrong.overall, Verdict::Failed);
        assert_eq!(v.calls(), 5);
    }

    #[test]
    fn degenerate_inputs() {
        let v = MockVerifier::default();
        assert!(matches!(
            v.check_proof(&Obligation::new("t", "  "), "OBVIOUS"),
            Err(VerifierError::ModuleRender(_))
        ));
        assert!(matches!(v.check_proof(&even(), " "), Err(VerifierError::EmptyProof)));
        assert!(VerdictTable::parse(r#"{"format":"verdicts/0"}"#).is_err());
        let r = VerificationResult::timeout("", 5);
        assert!(!r.message.is_empty());
    }

    #[test]
    fn deeper_proposals_are_checked_at_level_one() {
        let mut p = proposal(&["a", "b"], "BY <3>1, <3>2");
        for (l, _) in &mut p.sub_obligations {
            *l = l.with_level(3);
        }
        let m = decomposition_module(&even(), &p).unwrap();
        assert!(m.text.contains("<1>1. a OMITTED"));
        assert!(m.text.contains("QED BY <1>1, <1>2"));
    }
}
