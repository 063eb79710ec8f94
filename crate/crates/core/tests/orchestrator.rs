use std::collections::HashMap;
use std::path::PathBuf;

use proptest::prelude::*;
use tlaprove_core::llm::{LlmError, RecordingBackend, ReplayBackend, ScriptedBackend, Transcript};
use tlaprove_core::orchestrator::{
    assemble_module, EventKind, ExhaustionReason, Orchestrator, OrchestratorError, Outcome, ProofResult, RunConfig,
    RunLog,
};
use tlaprove_core::prompts::PromptKind;
use tlaprove_core::proof_ast::{Obligation, ProofNode, ProofStatus, StepLabel};
use tlaprove_core::verifier::{CheckKind, MockVerifier, ProverTier, Verdict, VerdictEntry, VerdictTable};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn even_goal() -> Obligation {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("even/obligation.json")).unwrap()).unwrap()
}

fn table(rel: &str) -> VerdictTable {
    VerdictTable::load(&fixtures().join(rel)).unwrap()
}

fn replay(rel: &str) -> ReplayBackend {
    ReplayBackend::from_path(&fixtures().join(rel)).unwrap()
}

fn run_even(cfg: RunConfig) -> ProofResult {
    let llm = replay("even/transcript.jsonl");
    let verifier = MockVerifier::new(table("even/verdicts.json"));
    let orch: Orchestrator = Orchestrator::new(&llm, &verifier, cfg);
    orch.prove(&even_goal()).unwrap()
}

/// Checks the ordering and soundness properties every run log must have.
fn check_trace(log: &RunLog, cfg: &RunConfig) {
    #[derive(Default)]
    struct Seen {
        obvious: bool,
        all_provers: bool,
        checks: u32,
        proved: bool,
    }
    let mut per: HashMap<&str, Seen> = HashMap::new();
    for (i, e) in log.events.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
        let s = per.entry(e.obligation.as_str()).or_default();
        match &e.kind {
            EventKind::TierAttempted { tier: ProverTier::Obvious } => s.obvious = true,
            EventKind::TierAttempted { tier: ProverTier::AllProvers } => {
                assert!(s.obvious, "AllProvers before Obvious for {}", e.obligation);
                s.all_provers = true;
            }
            EventKind::TierAttempted { tier: ProverTier::Llm } | EventKind::CandidateGenerated { .. } => {
                assert!(s.obvious && s.all_provers, "LLM before mechanical tiers for {}", e.obligation);
            }
            EventKind::ProofChecked { verdict, .. } | EventKind::DecompositionChecked { verdict, .. } => {
                if matches!(e.kind, EventKind::DecompositionChecked { .. }) {
                    s.checks += 1;
                    assert!(s.checks <= cfg.max_decomposition_attempts_per_obligation);
                }
                s.proved |= *verdict == Verdict::Proved;
            }
            EventKind::NodeVerified { .. } => {
                assert!(s.proved, "{} verified without a passing check", e.obligation)
            }
            _ => {}
        }
    }
}

fn leaf_bodies(node: &ProofNode, out: &mut Vec<String>) {
    if node.children.is_empty() {
        out.push(node.proof_body.clone());
    }
    for c in &node.children {
        leaf_bodies(c, out);
    }
}

#[test]
fn even_replay_reproduces_the_worked_example() {
    let cfg = RunConfig::default();
    let r = run_even(cfg.clone());
    assert_eq!(r.outcome, Outcome::Complete);
    check_trace(&r.log, &cfg);

    let t = &r.tree;
    assert!(t.is_fully_verified());
    let subs = t.sub_steps();
    assert_eq!(subs.len(), 2);
    assert_eq!(subs[0].label, Some(StepLabel::numbered(1, 1)));
    assert_eq!(subs[0].proof_body, "OBVIOUS");
    assert_eq!(subs[1].assertion, "Even(2 * x)");
    assert_eq!(subs[1].sub_steps().len(), 2);
    assert_eq!(subs[1].qed_clause(), Some("BY <2>1, <2>2 DEF Even"));
    assert_eq!(t.qed_clause(), Some("BY <1>1, <1>2 DEF Even"));
    let mut leaves = Vec::new();
    leaf_bodies(t, &mut leaves);
    assert_eq!(leaves.iter().filter(|b| *b == "OBVIOUS").count(), 3);

    let module = assemble_module("EvenDouble_Proof", &even_goal(), t).unwrap();
    assert_eq!(module.text, std::fs::read_to_string(fixtures().join("even/expected_proof.tla")).unwrap());
}

#[test]
fn replay_is_deterministic_and_sibling_concurrency_does_not_change_it() {
    let a = run_even(RunConfig::default());
    let b = run_even(RunConfig::default());
    let c = run_even(RunConfig {
        concurrent_siblings: true,
        ..RunConfig::default()
    });
    assert_eq!(a.tree, b.tree);
    assert_eq!(a.log.to_jsonl(false), b.log.to_jsonl(false));
    assert_eq!(a.tree, c.tree);
    assert_eq!(a.log.to_jsonl(false), c.log.to_jsonl(false));
    assert_eq!(RunLog::parse(&a.log.to_jsonl(true)).unwrap(), a.log);
}

#[test]
fn always_failing_checks_exhaust_after_ten_attempts() {
    let llm = replay("always_fail/transcript.jsonl");
    let verifier = MockVerifier::new(table("always_fail/verdicts.json"));
    let cfg = RunConfig::default();
    let orch: Orchestrator = Orchestrator::new(&llm, &verifier, cfg.clone());
    let r = orch.prove(&even_goal()).unwrap();
    assert_eq!(r.outcome, Outcome::Exhausted);
    assert_eq!(r.tree, ProofNode::unproven_root());
    check_trace(&r.log, &cfg);
    let failed = r.log.count("EvenDouble", |k| {
        matches!(k, EventKind::DecompositionChecked { verdict: Verdict::Failed, .. })
    });
    assert_eq!(failed, 10);
    assert_eq!(
        r.log.count("EvenDouble", |k| matches!(
            k,
            EventKind::BudgetExhausted {
                reason: ExhaustionReason::Attempts,
                attempts: 10
            }
        )),
        1
    );
}

#[test]
fn attempt_budget_is_configurable() {
    let llm = replay("always_fail/transcript.jsonl");
    let verifier = MockVerifier::new(table("always_fail/verdicts.json"));
    let cfg = RunConfig {
        max_decomposition_attempts_per_obligation: 3,
        ..RunConfig::default()
    };
    let orch: Orchestrator = Orchestrator::new(&llm, &verifier, cfg);
    let r = orch.prove(&even_goal()).unwrap();
    assert_eq!(r.outcome, Outcome::Exhausted);
    assert_eq!(r.log.count("EvenDouble", |k| matches!(k, EventKind::DecompositionChecked { .. })), 3);
}

#[test]
fn obvious_goal_makes_no_llm_calls() {
    let goal = Obligation::new("Sum", "x + x = 2 * x").with_assume("NEW x \\in Nat").with_extends("Naturals");
    let llm = ScriptedBackend::new(Vec::<String>::new());
    let verifier = MockVerifier::new(table("even/verdicts.json"));
    let orch: Orchestrator = Orchestrator::new(&llm, &verifier, RunConfig::default());
    let r = orch.prove(&goal).unwrap();
    assert_eq!(r.outcome, Outcome::Complete);
    assert_eq!(r.tree, ProofNode::root_leaf("OBVIOUS").with_status(ProofStatus::Verified));
    assert!(llm.prompts().is_empty());
    assert!(!r.log.events.iter().any(|e| matches!(e.kind, EventKind::CandidateGenerated { .. })));
}

#[test]
fn refinement_prompt_carries_the_failure_message() {
    let goal = even_goal();
    let failing = VerdictEntry {
        check: CheckKind::Decomposition,
        assertion: Some("Even(x + x)".into()),
        proof: None,
        subs: Some(vec!["x + x = 2 * x".into()]),
        verdict: Verdict::Failed,
        message: Some("obligation at the QED step: Even(x + x) does not follow from <1>1".into()),
    };
    let verdicts = table("even/verdicts.json").with_entry(failing);
    let mut entries = verdicts.entries.clone();
    entries.rotate_right(1);
    let verdicts = VerdictTable { entries, ..verdicts };

    let bad = "ORIGINAL OBLIGATION:\nEven(x + x)\n\nDECOMPOSITION REASONING:\nrewrite\n\nPROOF STRATEGY:\nrewrite\n\n\
               SUB-OBLIGATIONS:\n<1>1. x + x = 2 * x\n\nQED CLAUSE:\nQED BY <1>1 DEF Even\n";
    let script: Vec<String> = serde_json::from_str(&std::fs::read_to_string(fixtures().join("even/script.json")).unwrap()).unwrap();
    let mut responses = script[..4].to_vec();
    responses.push(bad.into());
    responses.extend(script[4..].iter().cloned());

    let llm = RecordingBackend::new(ScriptedBackend::new(responses));
    let verifier = MockVerifier::new(verdicts);
    let orch: Orchestrator = Orchestrator::new(&llm, &verifier, RunConfig::default());
    let r = orch.prove(&goal).unwrap();
    assert_eq!(r.outcome, Outcome::Complete);

    let prompts = llm.inner().prompts();
    let refine: Vec<_> = prompts.iter().filter(|p| p.kind == PromptKind::Refine).collect();
    assert_eq!(refine.len(), 1);
    assert!(refine[0].text.contains("Even(x + x) does not follow from <1>1"));
    assert!(refine[0].text.contains("<1>1. x + x = 2 * x"));

    let transcript: Transcript = llm.transcript();
    assert!(transcript.entries.iter().any(|e| e.prompt_text == refine[0].text));
}

#[test]
fn exhausted_transcript_aborts_with_a_log() {
    let llm = ScriptedBackend::new(["```\nBY DEF Even\n```"]);
    let verifier = MockVerifier::new(table("even/verdicts.json"));
    let orch: Orchestrator = Orchestrator::new(&llm, &verifier, RunConfig::default());
    let f = orch.prove(&even_goal()).unwrap_err();
    assert!(matches!(f.error, OrchestratorError::Llm(LlmError::BackendUnreachable(_))));
    assert!(f.log.events.iter().any(|e| matches!(e.kind, EventKind::CandidateGenerated { .. })));
}

#[test]
fn unknown_prompts_fail_replay() {
    let llm = replay("even/transcript.jsonl");
    let verifier = MockVerifier::new(table("even/verdicts.json"));
    let orch: Orchestrator = Orchestrator::new(&llm, &verifier, RunConfig::default());
    let other = Obligation::new("Other", "Even(4)").with_definition("Even(n) == n % 2 = 0");
    let f = orch.prove(&other).unwrap_err();
    assert!(matches!(f.error, OrchestratorError::Llm(LlmError::TranscriptMismatch { .. })));
}

const POOL: [&str; 6] = [
    "```\nOBVIOUS\n```",
    "```\nBY SMT DEF Even\n```",
    "no proof here",
    "ORIGINAL OBLIGATION:\nEven(x + x)\n\nDECOMPOSITION REASONING:\nr\n\nPROOF STRATEGY:\ns\n\nSUB-OBLIGATIONS:\n\
     <1>1. x + x = 2 * x\n<1>2. Even(2 * x)\n\nQED CLAUSE:\nQED BY <1>1, <1>2 DEF Even\n",
    "ORIGINAL OBLIGATION:\nEven(2 * x)\n\nDECOMPOSITION REASONING:\nr\n\nPROOF STRATEGY:\ns\n\nSUB-OBLIGATIONS:\n\
     <1>1. 2 * x \\in Nat\n<1>2. (2 * x) % 2 = 0\n\nQED CLAUSE:\nQED BY <1>1, <1>2 DEF Even\n",
    "```\n<1>1. 2 * x \\in Nat OBVIOUS\n<1>2. (2 * x) % 2 = 0 OBVIOUS\n<1>. QED BY <1>1, <1>2 DEF Even\n```",
];

const ASSERTIONS: [&str; 5] = ["Even(x + x)", "x + x = 2 * x", "Even(2 * x)", "2 * x \\in Nat", "(2 * x) % 2 = 0"];

fn random_table(verdicts: &[bool]) -> VerdictTable {
    let mut t = VerdictTable::default();
    for (i, a) in ASSERTIONS.iter().enumerate() {
        for (j, check) in [CheckKind::Proof, CheckKind::Decomposition].into_iter().enumerate() {
            let proved = verdicts[(2 * i + j) % verdicts.len()];
            t = t.with_entry(VerdictEntry {
                check,
                assertion: Some((*a).into()),
                proof: None,
                subs: None,
                verdict: if proved { Verdict::Proved } else { Verdict::Failed },
                message: None,
            });
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_run_keeps_the_trace_invariants(
        verdicts in prop::collection::vec(any::<bool>(), 10),
        picks in prop::collection::vec(0usize..POOL.len(), 0..80),
        attempts in 1u32..4,
        depth in 1u32..4,
        candidates in 1usize..3,
    ) {
        let cfg = RunConfig {
            max_decomposition_attempts_per_obligation: attempts,
            max_depth: depth,
            n_candidates: candidates,
            ..RunConfig::default()
        };
        let llm = ScriptedBackend::new(picks.iter().map(|&i| POOL[i]));
        let verifier = MockVerifier::new(random_table(&verdicts));
        let orch: Orchestrator = Orchestrator::new(&llm, &verifier, cfg.clone());
        match orch.prove(&even_goal()) {
            Ok(r) => {
                check_trace(&r.log, &cfg);
                match r.outcome {
                    Outcome::Complete => {
                        prop_assert!(r.tree.is_fully_verified());
                        prop_assert!(r.tree.depth() <= depth as usize);
                        prop_assert!(assemble_module("P", &even_goal(), &r.tree).is_ok());
                    }
                    Outcome::Exhausted => prop_assert!(r.log.has_exhaustion()),
                }
            }
            Err(f) => {
                check_trace(&f.log, &cfg);
                prop_assert!(matches!(f.error, OrchestratorError::Llm(LlmError::BackendUnreachable(_))));
            }
        }
    }
}
