//! The proof search loop.
//!
//! Every obligation is first attacked as a leaf: `OBVIOUS`, then
//! `BY AllProvers`, then LLM candidates prompted with retrieved reference
//! statements. If none verifies, the obligation is decomposed: the LLM
//! proposes sub-obligations, the prover checks that they imply the
//! obligation, and each sub-obligation is solved the same way one level
//! deeper. A rejected decomposition, or one whose sub-obligation cannot be
//! solved, is refined with the failure as feedback until the per-obligation
//! attempt budget runs out.

use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::llm::{GenerationRequest, LlmBackend, LlmError, CANDIDATE_TEMPERATURE, DEFAULT_CANDIDATES, DEFAULT_MAX_TOKENS};
use crate::prompts::{parse_decomposition_for, parse_proof_response, DecompositionProposal, PromptKind, PromptText, Templates};
use crate::proof_ast::{
    parse_proof_text, render_obligation_module, render_proof, Obligation, ProofAstError, ProofNode, ProofStatus,
    RenderedModule, StepLabel, StepName,
};
use crate::retrieval::{obligation_query, Embedder, ReferenceSet, RetrievalError, RetrievalIndex};
use crate::scalar::Scalar;
use crate::text::short_hash;
use crate::verifier::{ObligationReport, ObligationStatus, ProverTier, Verdict, VerificationResult, Verifier, VerifierError};

pub const RUNLOG_FORMAT: &str = "runlog/1";

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("depth {depth} exceeds the maximum of {max}")]
    DepthExceeded { depth: u32, max: u32 },
    #[error("no decomposition accepted after {0} attempts")]
    DecompositionBudgetExhausted(u32),
    #[error("none of the {0} decomposition responses could be parsed")]
    ParseFailureBudget(u32),
    #[error("proof tree is incomplete: {0}")]
    IncompleteTree(String),
    #[error(transparent)]
    Render(#[from] ProofAstError),
}

pub type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub max_decomposition_attempts_per_obligation: u32,
    /// Optional cap on decomposition attempts across the whole run.
    pub max_total_decomposition_attempts: Option<u32>,
    pub max_depth: u32,
    pub n_candidates: usize,
    pub retrieval_k: usize,
    pub refinement_enabled: bool,
    pub concurrent_siblings: bool,
    pub candidate_temperature: f64,
    pub max_tokens: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_decomposition_attempts_per_obligation: 10,
            max_total_decomposition_attempts: None,
            max_depth: 5,
            n_candidates: DEFAULT_CANDIDATES,
            retrieval_k: 5,
            refinement_enabled: true,
            concurrent_siblings: false,
            candidate_temperature: CANDIDATE_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OrchestratorError::Configuration(m.into()));
        if self.max_decomposition_attempts_per_obligation == 0 {
            return bad("max_decomposition_attempts_per_obligation must be at least 1");
        }
        if self.max_total_decomposition_attempts == Some(0) {
            return bad("max_total_decomposition_attempts must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if self.retrieval_k == 0 {
            return bad("retrieval_k must be at least 1");
        }
        if self.candidate_temperature.is_nan() || self.candidate_temperature < 0.0 {
            return bad("candidate_temperature must be non-negative");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be at least 1");
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Run log

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustionReason {
    Attempts,
    ParseFailures,
    Depth,
    RunBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum EventKind {
    DecomposeRequested {
        attempt: u32,
        refinement: bool,
        prompt_hash: String,
    },
    DecompositionProposed {
        attempt: u32,
        response_hash: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subs: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parse_error: Option<String>,
    },
    DecompositionChecked {
        attempt: u32,
        proposal_hash: String,
        verdict: Verdict,
    },
    TierAttempted {
        tier: ProverTier,
    },
    CandidateGenerated {
        index: usize,
        prompt_hash: String,
        response_hash: String,
    },
    ProofChecked {
        tier: ProverTier,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        candidate: Option<usize>,
        proof_hash: String,
        verdict: Verdict,
    },
    NodeVerified {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        internal: bool,
    },
    BudgetExhausted {
        reason: ExhaustionReason,
        attempts: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEvent {
    pub seq: u64,
    pub at_ms: u64,
    /// Path of the obligation within the search, e.g. `Goal/1:<1>2`, where
    /// `1` is the parent's decomposition attempt.
    pub obligation: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLog {
    pub events: Vec<RunEvent>,
}

#[derive(Serialize, Deserialize)]
struct RunLogHeader {
    format: String,
}

impl RunLog {
    pub fn count(&self, obligation: &str, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.events
            .iter()
            .filter(|e| e.obligation == obligation && pred(&e.kind))
            .count()
    }

    pub fn has_exhaustion(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e.kind, EventKind::BudgetExhausted { .. }))
    }

    /// Line-delimited JSON, optionally without timestamps.
    pub fn to_jsonl(&self, timestamps: bool) -> String {
        let mut out = serde_json::to_string(&RunLogHeader {
            format: RUNLOG_FORMAT.into(),
        })
        .expect("header serializes");
        out.push('\n');
        for e in &self.events {
            let mut v = serde_json::to_value(e).expect("event serializes");
            if !timestamps {
                if let Some(o) = v.as_object_mut() {
                    o.remove("at_ms");
                }
            }
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: RunLogHeader = serde_json::from_str(lines.next().unwrap_or("")).map_err(|e| e.to_string())?;
        if header.format != RUNLOG_FORMAT {
            return Err(format!("unsupported format {:?}", header.format));
        }
        let events = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        Ok(Self { events })
    }
}

/// Events of one branch of the search, sequenced when branches are merged.
struct Trace {
    started: Instant,
    events: Vec<(u64, String, EventKind)>,
}

impl Trace {
    fn new(started: Instant) -> Self {
        Self {
            started,
            events: Vec::new(),
        }
    }

    fn push(&mut self, obligation: &str, kind: EventKind) {
        let at = self.started.elapsed().as_millis() as u64;
        self.events.push((at, obligation.to_string(), kind));
    }

    fn append(&mut self, other: Trace) {
        self.events.extend(other.events);
    }

    fn into_log(self) -> RunLog {
        RunLog {
            events: self
                .events
                .into_iter()
                .enumerate()
                .map(|(i, (at_ms, obligation, kind))| RunEvent {
                    seq: i as u64,
                    at_ms,
                    obligation,
                    kind,
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Results

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Complete,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofResult {
    pub outcome: Outcome,
    pub tree: ProofNode,
    pub log: RunLog,
}

/// A run aborted by an environment error, with the events logged so far.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: OrchestratorError,
    pub log: RunLog,
}

/// Outcome of leaf proving.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafOutcome {
    Proved(ProofNode),
    NeedsDecomposition,
}

/// Failure of one branch; `feedback` is what the parent's next refinement
/// prompt reports.
struct BranchFailure {
    feedback: String,
}

/// Renders a verified proof tree.
pub fn assemble(tree: &ProofNode) -> Result<String> {
    if !tree.is_fully_verified() {
        return Err(OrchestratorError::IncompleteTree(first_unverified(tree)));
    }
    Ok(render_proof(tree)?)
}

/// A module stating `goal` with the verified proof `tree`.
pub fn assemble_module(module_name: &str, goal: &Obligation, tree: &ProofNode) -> Result<RenderedModule> {
    assemble(tree)?;
    Ok(render_obligation_module(module_name, goal, tree)?)
}

fn first_unverified(node: &ProofNode) -> String {
    if node.status != ProofStatus::Verified {
        return node
            .label
            .as_ref()
            .map_or_else(|| "the root is not verified".into(), |l| format!("step {l} is {:?}", node.status));
    }
    node.children
        .iter()
        .find(|c| !c.is_fully_verified())
        .map_or_else(String::new, first_unverified)
}

fn is_hard_llm(e: &LlmError) -> bool {
    !matches!(e, LlmError::AllCandidatesFailed(_))
}

fn is_hard_verifier(e: &VerifierError) -> bool {
    matches!(
        e,
        VerifierError::ProverNotFound(_) | VerifierError::WorkingDir(_) | VerifierError::VerdictTable(_)
    )
}

/// Everything a run needs besides the goal.
pub struct Orchestrator<'a, T: Scalar = f64> {
    pub llm: &'a dyn LlmBackend,
    pub verifier: &'a dyn Verifier,
    pub index: Option<&'a RetrievalIndex<T>>,
    pub embedder: Option<&'a dyn Embedder<T>>,
    pub templates: Templates,
    pub config: RunConfig,
    total_attempts: AtomicU32,
}

impl<'a, T: Scalar> Orchestrator<'a, T> {
    pub fn new(llm: &'a dyn LlmBackend, verifier: &'a dyn Verifier, config: RunConfig) -> Self {
        Self {
            llm,
            verifier,
            index: None,
            embedder: None,
            templates: Templates::builtin(),
            config,
            total_attempts: AtomicU32::new(0),
        }
    }

    pub fn with_retrieval(mut self, index: &'a RetrievalIndex<T>, embedder: &'a dyn Embedder<T>) -> Self {
        self.index = Some(index);
        self.embedder = Some(embedder);
        self
    }

    pub fn with_templates(mut self, templates: Templates) -> Self {
        self.templates = templates;
        self
    }

    /// Searches for a complete proof of `goal`.
    pub fn prove(&self, goal: &Obligation) -> Result<ProofResult, RunFailure> {
        let started = Instant::now();
        let mut trace = Trace::new(started);
        let fail = |error: OrchestratorError, trace: Trace| RunFailure {
            error,
            log: trace.into_log(),
        };
        if let Err(e) = self.config.validate().and_then(|_| goal.validate().map_err(Into::into)) {
            return Err(fail(e, trace));
        }
        self.total_attempts.store(0, Ordering::SeqCst);
        let path = if goal.name.trim().is_empty() { "goal".to_string() } else { goal.name.clone() };
        match self.solve(goal, None, 0, &path, &mut trace) {
            Ok(Ok(tree)) => Ok(ProofResult {
                outcome: Outcome::Complete,
                tree,
                log: trace.into_log(),
            }),
            Ok(Err(_)) => Ok(ProofResult {
                outcome: Outcome::Exhausted,
                tree: ProofNode::unproven_root(),
                log: trace.into_log(),
            }),
            Err(e) => Err(fail(e, trace)),
        }
    }

    /// Tries the prover tiers, then LLM candidates.
    pub fn prove_leaf(&self, obl: &Obligation, depth: u32) -> Result<LeafOutcome> {
        let mut trace = Trace::new(Instant::now());
        self.prove_leaf_traced(obl, None, depth, &obl.name, &mut trace)
    }

    /// Requests decompositions until one passes the decomposition check.
    pub fn decompose_with_retry(&self, obl: &Obligation, depth: u32) -> Result<DecompositionProposal> {
        let mut trace = Trace::new(Instant::now());
        match self.decompose_loop(obl, depth, &obl.name, &mut trace, |_, _, _| Ok(Ok(Vec::new())))? {
            Ok((p, _)) => Ok(p),
            Err((ExhaustionReason::ParseFailures, n)) => Err(OrchestratorError::ParseFailureBudget(n)),
            Err((_, n)) => Err(OrchestratorError::DecompositionBudgetExhausted(n)),
        }
    }

    fn solve(
        &self,
        obl: &Obligation,
        label: Option<&StepLabel>,
        depth: u32,
        path: &str,
        trace: &mut Trace,
    ) -> Result<Result<ProofNode, BranchFailure>> {
        if let LeafOutcome::Proved(node) = self.prove_leaf_traced(obl, label, depth, path, trace)? {
            trace.push(
                path,
                EventKind::NodeVerified {
                    label: label.map(ToString::to_string),
                    internal: !node.is_leaf(),
                },
            );
            return Ok(Ok(node));
        }
        if depth >= self.config.max_depth {
            trace.push(
                path,
                EventKind::BudgetExhausted {
                    reason: ExhaustionReason::Depth,
                    attempts: 0,
                },
            );
            return Ok(Err(BranchFailure {
                feedback: format!(
                    "it could not be proved and the maximum proof depth of {} does not allow decomposing it further",
                    self.config.max_depth
                ),
            }));
        }
        let outcome = self.decompose_loop(obl, depth, path, trace, |proposal, attempt, trace| {
            self.solve_children(obl, proposal, depth, &format!("{path}/{attempt}"), trace)
        })?;
        match outcome {
            Ok((proposal, children)) => {
                let qed = proposal.qed_clause.clone();
                let mut node = match label {
                    Some(l) => ProofNode::internal(l.clone(), obl.assertion.clone(), children, qed),
                    None => ProofNode::root_internal(children, qed),
                };
                node.status = ProofStatus::Verified;
                if let Some(q) = node.children.last_mut() {
                    q.status = ProofStatus::Verified;
                }
                trace.push(
                    path,
                    EventKind::NodeVerified {
                        label: label.map(ToString::to_string),
                        internal: true,
                    },
                );
                Ok(Ok(node))
            }
            Err((reason, attempts)) => {
                trace.push(path, EventKind::BudgetExhausted { reason, attempts });
                Ok(Err(BranchFailure {
                    feedback: format!("no valid decomposition of it was found in {attempts} attempts"),
                }))
            }
        }
    }

    fn solve_children(
        &self,
        parent: &Obligation,
        proposal: &DecompositionProposal,
        depth: u32,
        prefix: &str,
        trace: &mut Trace,
    ) -> Result<Result<Vec<ProofNode>, VerificationResult>> {
        let subs: Vec<(StepLabel, Obligation, String)> = proposal
            .sub_obligations
            .iter()
            .map(|(label, assertion)| {
                let name = format!("{}_{}", parent.name, step_suffix(label));
                (label.clone(), parent.child(name, assertion.clone()), format!("{prefix}:{}", label.reference()))
            })
            .collect();
        let started = trace.started;
        let results: Vec<(Trace, Result<Result<ProofNode, BranchFailure>>)> = if self.config.concurrent_siblings && subs.len() > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = subs
                    .iter()
                    .map(|(label, obl, path)| {
                        s.spawn(move || {
                            let mut t = Trace::new(started);
                            let r = self.solve(obl, Some(label), depth + 1, path, &mut t);
                            (t, r)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sibling worker panicked"))
                    .collect()
            })
        } else {
            let mut out = Vec::new();
            for (label, obl, path) in &subs {
                let mut t = Trace::new(trace.started);
                let r = self.solve(obl, Some(label), depth + 1, path, &mut t);
                let stop = !matches!(r, Ok(Ok(_)));
                out.push((t, r));
                if stop {
                    break;
                }
            }
            out
        };
        let mut children = Vec::new();
        let mut failure = None;
        for ((t, r), (label, obl, _)) in results.into_iter().zip(&subs) {
            trace.append(t);
            match r? {
                Ok(node) => children.push(node),
                Err(f) => {
                    if failure.is_none() {
                        failure = Some(child_failure(label, obl, &f));
                    }
                }
            }
        }
        Ok(match failure {
            Some(f) => Err(f),
            None => Ok(children),
        })
    }

    fn prove_leaf_traced(
        &self,
        obl: &Obligation,
        label: Option<&StepLabel>,
        depth: u32,
        path: &str,
        trace: &mut Trace,
    ) -> Result<LeafOutcome> {
        if depth > self.config.max_depth {
            return Err(OrchestratorError::DepthExceeded {
                depth,
                max: self.config.max_depth,
            });
        }
        let leaf = |body: &str| {
            let node = match label {
                Some(l) => ProofNode::leaf(l.clone(), obl.assertion.clone(), body),
                None => ProofNode::root_leaf(body),
            };
            node.with_status(ProofStatus::Verified)
        };
        for tier in ProverTier::MECHANICAL {
            let body = tier.proof_body().expect("mechanical tier");
            trace.push(path, EventKind::TierAttempted { tier });
            let r = self.verifier.try_tier(obl, tier)?;
            trace.push(
                path,
                EventKind::ProofChecked {
                    tier,
                    candidate: None,
                    proof_hash: short_hash(body),
                    verdict: r.overall,
                },
            );
            if r.is_proved() {
                return Ok(LeafOutcome::Proved(leaf(body)));
            }
        }

        trace.push(path, EventKind::TierAttempted { tier: ProverTier::Llm });
        let refs = self.references(obl)?;
        let prompt = self.templates.proof(obl, &refs);
        let prompt_hash = short_hash(&prompt.text);
        let mut req = GenerationRequest::candidates(prompt, self.config.n_candidates);
        req.temperature = self.config.candidate_temperature;
        req.max_tokens = self.config.max_tokens;
        let generated = match self.llm.generate(&req) {
            Ok(g) => g,
            Err(e) if is_hard_llm(&e) => return Err(e.into()),
            Err(e) => {
                log::warn!("{path}: {e}");
                return Ok(LeafOutcome::NeedsDecomposition);
            }
        };
        for (i, c) in generated.candidates.iter().enumerate() {
            trace.push(
                path,
                EventKind::CandidateGenerated {
                    index: i,
                    prompt_hash: prompt_hash.clone(),
                    response_hash: short_hash(c),
                },
            );
        }
        let level = label.map_or(0, StepLabel::level);
        for (i, c) in generated.candidates.iter().enumerate() {
            let Ok(body) = parse_proof_response(c) else { continue };
            let Some(node) = self.candidate_node(label, obl, &body, level) else {
                continue;
            };
            let r = match self.verifier.check_proof(obl, &body) {
                Ok(r) => r,
                Err(e) if is_hard_verifier(&e) => return Err(e.into()),
                Err(e) => VerificationResult::failed(e.to_string(), Vec::new(), 0),
            };
            trace.push(
                path,
                EventKind::ProofChecked {
                    tier: ProverTier::Llm,
                    candidate: Some(i),
                    proof_hash: short_hash(&body),
                    verdict: r.overall,
                },
            );
            if r.is_proved() {
                return Ok(LeafOutcome::Proved(node));
            }
        }
        Ok(LeafOutcome::NeedsDecomposition)
    }

    /// The tree node a candidate proof would become, or `None` when it does
    /// not parse or would exceed the depth limit.
    fn candidate_node(&self, label: Option<&StepLabel>, obl: &Obligation, body: &str, level: u32) -> Option<ProofNode> {
        let parsed = parse_proof_text(body).ok()?;
        let mut node = if parsed.children.is_empty() {
            match label {
                Some(l) => ProofNode::leaf(l.clone(), obl.assertion.clone(), parsed.proof_body),
                None => ProofNode::root_leaf(parsed.proof_body),
            }
        } else {
            if parsed.children.first().map(ProofNode::level) != Some(1) {
                return None;
            }
            let mut root = parsed;
            root.shift_levels(level);
            if level as usize + root.depth() > self.config.max_depth as usize {
                return None;
            }
            match label {
                Some(l) => ProofNode {
                    label: Some(l.clone()),
                    assertion: obl.assertion.clone(),
                    proof_body: String::new(),
                    children: root.children,
                    status: ProofStatus::Unproven,
                },
                None => root,
            }
        };
        node.set_status_recursive(ProofStatus::Verified);
        node.validate().ok()?;
        Some(node)
    }

    fn references(&self, obl: &Obligation) -> Result<ReferenceSet<T>> {
        match (self.index, self.embedder) {
            (Some(index), Some(embedder)) if !index.is_empty() => {
                Ok(index.search_text(&obligation_query(obl), self.config.retrieval_k, embedder)?)
            }
            _ => Ok(ReferenceSet::empty()),
        }
    }

    fn next_prompt(&self, obl: &Obligation, last: Option<&(DecompositionProposal, VerificationResult)>) -> PromptText {
        match last {
            Some((p, r)) if self.config.refinement_enabled => self
                .templates
                .refinement(obl, p, r)
                .unwrap_or_else(|_| self.templates.decomposition(obl)),
            _ => self.templates.decomposition(obl),
        }
    }

    /// Runs decomposition attempts. `accept` is called with each proposal
    /// that passes the decomposition check; it either returns the solved
    /// children or a failure that feeds the next refinement.
    #[allow(clippy::type_complexity)]
    fn decompose_loop(
        &self,
        obl: &Obligation,
        depth: u32,
        path: &str,
        trace: &mut Trace,
        mut accept: impl FnMut(&DecompositionProposal, u32, &mut Trace) -> Result<Result<Vec<ProofNode>, VerificationResult>>,
    ) -> Result<Result<(DecompositionProposal, Vec<ProofNode>), (ExhaustionReason, u32)>> {
        if depth >= self.config.max_depth {
            return Err(OrchestratorError::DepthExceeded {
                depth: depth + 1,
                max: self.config.max_depth,
            });
        }
        let budget = self.config.max_decomposition_attempts_per_obligation;
        let mut last: Option<(DecompositionProposal, VerificationResult)> = None;
        let mut parsed_any = false;
        let mut attempts = 0;
        while attempts < budget {
            if let Some(cap) = self.config.max_total_decomposition_attempts {
                if self.total_attempts.fetch_add(1, Ordering::SeqCst) >= cap {
                    return Ok(Err((ExhaustionReason::RunBudget, attempts)));
                }
            }
            attempts += 1;
            let prompt = self.next_prompt(obl, last.as_ref());
            let refinement = prompt.kind == PromptKind::Refine;
            trace.push(
                path,
                EventKind::DecomposeRequested {
                    attempt: attempts,
                    refinement,
                    prompt_hash: short_hash(&prompt.text),
                },
            );
            let mut req = GenerationRequest::single(prompt);
            req.max_tokens = self.config.max_tokens;
            let response = match self.llm.generate(&req) {
                Ok(g) => g.candidates.into_iter().next().unwrap_or_default(),
                Err(e) if is_hard_llm(&e) => return Err(e.into()),
                Err(e) => {
                    log::warn!("{path}: {e}");
                    String::new()
                }
            };
            let proposal = parse_decomposition_for(&response, obl).map(|p| p.at_level(depth + 1));
            trace.push(
                path,
                EventKind::DecompositionProposed {
                    attempt: attempts,
                    response_hash: short_hash(&response),
                    subs: proposal.as_ref().ok().map(|p| p.sub_obligations.len()),
                    parse_error: proposal.as_ref().err().map(ToString::to_string),
                },
            );
            let proposal = match proposal {
                Ok(p) => p,
                Err(e) => {
                    log::info!("{path}: unusable decomposition response: {e}");
                    continue;
                }
            };
            parsed_any = true;
            let check = match self.verifier.check_decomposition(obl, &proposal) {
                Ok(r) => r,
                Err(e) if is_hard_verifier(&e) => return Err(e.into()),
                Err(e) => VerificationResult::failed(e.to_string(), Vec::new(), 0),
            };
            trace.push(
                path,
                EventKind::DecompositionChecked {
                    attempt: attempts,
                    proposal_hash: short_hash(&proposal.to_response_text()),
                    verdict: check.overall,
                },
            );
            if !check.is_proved() {
                last = Some((proposal, check));
                continue;
            }
            match accept(&proposal, attempts, trace)? {
                Ok(children) => return Ok(Ok((proposal, children))),
                Err(feedback) => last = Some((proposal, feedback)),
            }
        }
        let reason = if parsed_any { ExhaustionReason::Attempts } else { ExhaustionReason::ParseFailures };
        Ok(Err((reason, attempts)))
    }
}

fn step_suffix(label: &StepLabel) -> String {
    match label.name() {
        StepName::Named(n) => format!("{}_{n}", label.level()),
        StepName::Qed => format!("{}_qed", label.level()),
        StepName::Unnamed => format!("{}_step", label.level()),
    }
}

fn child_failure(label: &StepLabel, obl: &Obligation, f: &BranchFailure) -> VerificationResult {
    VerificationResult::failed(
        format!(
            "The decomposition was accepted, but sub-obligation {} ({}) could not be proved: {}.",
            label.reference(),
            obl.assertion.trim(),
            f.feedback
        ),
        vec![ObligationReport {
            location: crate::verifier::Location {
                label: Some(label.clone()),
                ..Default::default()
            },
            status: ObligationStatus::Failed,
            message: String::new(),
        }],
        0,
    )
}
