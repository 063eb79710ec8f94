//! Prompt rendering and parsing of the structured LLM responses.
//!
//! Templates are plain text files with `{{placeholder}}` markers. The
//! defaults are compiled in from `templates/`; a directory with files of the
//! same names overrides them.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::proof_ast::{Obligation, StepLabel};
use crate::retrieval::ReferenceSet;
use crate::scalar::Scalar;
use crate::text::{find_keyword, first_word, map_step_refs, normalize_whitespace};
use crate::verifier::VerificationResult;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("response is missing the {0} section")]
    MissingSection(String),
    #[error("response contains no sub-obligations")]
    NoSubObligations,
    #[error("echoed obligation {echoed:?} does not match {expected:?}")]
    ObligationMismatch { expected: String, echoed: String },
    #[error("response contains no proof")]
    EmptyProof,
    #[error("refinement requested for a successful verification")]
    RefineOnSuccess,
    #[error("theorem text is empty")]
    EmptyTheorem,
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
}

pub type Result<T, E = PromptError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Decompose,
    Refine,
    ProveWithReferences,
    BaselineMinimal,
    BaselineCoT,
    BaselineToT,
    BaselineGoT,
}

impl PromptKind {
    pub const ALL: [PromptKind; 7] = [
        PromptKind::Decompose,
        PromptKind::Refine,
        PromptKind::ProveWithReferences,
        PromptKind::BaselineMinimal,
        PromptKind::BaselineCoT,
        PromptKind::BaselineToT,
        PromptKind::BaselineGoT,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::Decompose => "decompose.txt",
            PromptKind::Refine => "refine.txt",
            PromptKind::ProveWithReferences => "prove.txt",
            PromptKind::BaselineMinimal => "baseline_minimal.txt",
            PromptKind::BaselineCoT => "baseline_cot.txt",
            PromptKind::BaselineToT => "baseline_tot.txt",
            PromptKind::BaselineGoT => "baseline_got.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptKind::Decompose => include_str!("../templates/decompose.txt"),
            PromptKind::Refine => include_str!("../templates/refine.txt"),
            PromptKind::ProveWithReferences => include_str!("../templates/prove.txt"),
            PromptKind::BaselineMinimal => include_str!("../templates/baseline_minimal.txt"),
            PromptKind::BaselineCoT => include_str!("../templates/baseline_cot.txt"),
            PromptKind::BaselineToT => include_str!("../templates/baseline_tot.txt"),
            PromptKind::BaselineGoT => include_str!("../templates/baseline_got.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub text: String,
    pub kind: PromptKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineStyle {
    Minimal,
    CoT,
    ToT,
    GoT,
}

impl BaselineStyle {
    fn kind(self) -> PromptKind {
        match self {
            BaselineStyle::Minimal => PromptKind::BaselineMinimal,
            BaselineStyle::CoT => PromptKind::BaselineCoT,
            BaselineStyle::ToT => PromptKind::BaselineToT,
            BaselineStyle::GoT => PromptKind::BaselineGoT,
        }
    }
}

/// Replaces each `{{name}}` with its value in one left-to-right pass, so
/// substituted text is never itself expanded. Unknown names are kept.
pub fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = after[..end].trim();
                match values.iter().find(|(n, _)| *n == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn collapse_blank_runs(text: &str) -> String {
    static RUNS: OnceLock<Regex> = OnceLock::new();
    let re = RUNS.get_or_init(|| Regex::new(r"\n[ \t]*\n(?:[ \t]*\n)+").unwrap());
    let s = re.replace_all(text, "\n\n");
    format!("{}\n", s.trim_matches('\n'))
}

/// A full set of templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: HashMap<PromptKind, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            texts: PromptKind::ALL
                .iter()
                .map(|k| (*k, k.builtin().to_string()))
                .collect(),
        }
    }

    /// Built-in templates, with any same-named file in `dir` taking precedence.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::builtin();
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Template {
                    name: path.display().to_string(),
                    message: e.to_string(),
                })?;
                t.texts.insert(kind, text);
            }
        }
        Ok(t)
    }

    pub fn get(&self, kind: PromptKind) -> &str {
        &self.texts[&kind]
    }

    pub fn set(&mut self, kind: PromptKind, text: impl Into<String>) {
        self.texts.insert(kind, text.into());
    }

    fn render(&self, kind: PromptKind, values: &[(&str, &str)]) -> PromptText {
        PromptText {
            text: collapse_blank_runs(&substitute(self.get(kind), values)),
            kind,
        }
    }

    pub fn decomposition(&self, obl: &Obligation) -> PromptText {
        self.render(
            PromptKind::Decompose,
            &[
                ("obligation", &obl.statement()),
                ("definitions", &definitions_block(obl)),
            ],
        )
    }

    pub fn refinement(
        &self,
        obl: &Obligation,
        failed: &DecompositionProposal,
        feedback: &VerificationResult,
    ) -> Result<PromptText> {
        if feedback.is_proved() {
            return Err(PromptError::RefineOnSuccess);
        }
        let mut fb = feedback.feedback();
        if fb.trim().is_empty() {
            fb = "Verification failed; the prover gave no further detail.".into();
        }
        Ok(self.render(
            PromptKind::Refine,
            &[
                ("obligation", &obl.statement()),
                ("definitions", &definitions_block(obl)),
                ("failed_subs", &failed.steps_text()),
                ("feedback", &fb),
            ],
        ))
    }

    pub fn proof<T: Scalar>(&self, obl: &Obligation, refs: &ReferenceSet<T>) -> PromptText {
        self.render(
            PromptKind::ProveWithReferences,
            &[
                ("obligation", &obl.statement()),
                ("definitions", &definitions_block(obl)),
                ("references", &references_block(refs)),
            ],
        )
    }

    pub fn baseline(&self, style: BaselineStyle, theorem: &str) -> Result<PromptText> {
        let theorem = theorem.trim();
        if theorem.is_empty() {
            return Err(PromptError::EmptyTheorem);
        }
        Ok(PromptText {
            text: substitute(self.get(style.kind()), &[("theorem", theorem)]),
            kind: style.kind(),
        })
    }
}

fn builtin_templates() -> &'static Templates {
    static T: OnceLock<Templates> = OnceLock::new();
    T.get_or_init(Templates::builtin)
}

fn definitions_block(obl: &Obligation) -> String {
    let texts: Vec<&str> = obl
        .declarations
        .iter()
        .map(String::as_str)
        .chain(obl.definitions.iter().map(|d| d.text.as_str()))
        .map(str::trim_end)
        .collect();
    if texts.is_empty() {
        return "(none)".into();
    }
    texts.join("\n")
}

fn references_block<T: Scalar>(refs: &ReferenceSet<T>) -> String {
    if refs.is_empty() {
        return String::new();
    }
    let mut s = String::from(
        "Here are verified TLAPS proof steps similar to the obligation. Use them as examples of valid syntax and proof tactics.\n",
    );
    for (i, text) in refs.texts().enumerate() {
        s.push_str(&format!("\nEXAMPLE {}:\n{}\n", i + 1, text.trim_end()));
    }
    s
}

pub fn render_decomposition_prompt(obl: &Obligation) -> PromptText {
    builtin_templates().decomposition(obl)
}

pub fn render_refinement_prompt(
    obl: &Obligation,
    failed: &DecompositionProposal,
    feedback: &VerificationResult,
) -> Result<PromptText> {
    builtin_templates().refinement(obl, failed, feedback)
}

pub fn render_proof_prompt<T: Scalar>(obl: &Obligation, refs: &ReferenceSet<T>) -> PromptText {
    builtin_templates().proof(obl, refs)
}

pub fn render_baseline_prompt(style: BaselineStyle, theorem: &str) -> Result<PromptText> {
    builtin_templates().baseline(style, theorem)
}

// ---------------------------------------------------------------------------
// Responses

/// A decomposition as proposed by the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionProposal {
    pub echoed_obligation: String,
    pub reasoning: String,
    pub proof_strategy: String,
    pub sub_obligations: Vec<(StepLabel, String)>,
    pub qed_clause: String,
}

impl DecompositionProposal {
    /// The same proposal with every sub at `level`, references in the QED
    /// clause rewritten to match.
    pub fn at_level(&self, level: u32) -> Self {
        let from = self.sub_obligations.first().map_or(level, |(l, _)| l.level());
        let mut p = self.clone();
        if from == level {
            return p;
        }
        for (l, _) in &mut p.sub_obligations {
            *l = l.with_level(level);
        }
        p.qed_clause = map_step_refs(&p.qed_clause, |l| if l == from { level } else { l });
        p
    }

    pub fn level(&self) -> Option<u32> {
        self.sub_obligations.first().map(|(l, _)| l.level())
    }

    /// The subs and QED step as TLAPS step lines.
    pub fn steps_text(&self) -> String {
        let mut s = String::new();
        for (label, assertion) in &self.sub_obligations {
            s.push_str(&format!("{} {}\n", label.step_prefix(), assertion));
        }
        let level = self.level().unwrap_or(1);
        s.push_str(&format!("{} {}", StepLabel::qed(level).step_prefix(), self.qed_clause));
        s.push('\n');
        s.replace(". QED.", ". QED")
    }

    /// The proposal written in the response format the parser accepts.
    pub fn to_response_text(&self) -> String {
        let mut subs = String::new();
        for (label, assertion) in &self.sub_obligations {
            subs.push_str(&format!("{} {}\n", label.step_prefix(), assertion));
        }
        format!(
            "ORIGINAL OBLIGATION:\n{}\n\nDECOMPOSITION REASONING:\n{}\n\nPROOF STRATEGY:\n{}\n\nSUB-OBLIGATIONS:\n{}\nQED CLAUSE:\n{}\n",
            self.echoed_obligation, self.reasoning, self.proof_strategy, subs, self.qed_clause
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Original,
    Reasoning,
    Strategy,
    Subs,
    Qed,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Original => "original obligation",
            Section::Reasoning => "decomposition reasoning",
            Section::Strategy => "proof strategy",
            Section::Subs => "sub-obligations",
            Section::Qed => "QED clause",
        }
    }
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_uppercase)
        .collect()
}

/// Recognizes a section header line, returning the section and any content
/// that follows the header on the same line.
fn header(line: &str) -> Option<(Section, String)> {
    let t = line
        .trim()
        .trim_start_matches(|c: char| c == '#' || c == '>' || c == '*' || c == '_' || c.is_whitespace());
    let t = t.trim_start_matches(|c: char| c.is_ascii_digit());
    let t = t.trim_start_matches(['.', ')']).trim_start_matches(['*', '_', ' ']);
    let (head, inline) = match t.find(':') {
        Some(i) => (&t[..i], t[i + 1..].trim_start_matches(['*', '_']).trim()),
        None => (t, ""),
    };
    let head_squashed = squash(head);
    let has_colon = t.contains(':');
    let section = match head_squashed.as_str() {
        "ORIGINALOBLIGATION" => Section::Original,
        "DECOMPOSITIONREASONING" => Section::Reasoning,
        "PROOFSTRATEGY" => Section::Strategy,
        "SUBOBLIGATIONS" => Section::Subs,
        "QEDCLAUSE" | "QED" if has_colon || head_squashed == "QEDCLAUSE" => Section::Qed,
        _ => return None,
    };
    // Prose that merely starts with a section name is not a header.
    let head_trimmed = head.trim().trim_end_matches(['*', '_']).trim();
    if head_trimmed.split_whitespace().count() > 3 {
        return None;
    }
    Some((section, inline.to_string()))
}

fn split_sections(text: &str) -> HashMap<Section, String> {
    let mut sections: HashMap<Section, String> = HashMap::new();
    let mut current: Option<Section> = None;
    let mut in_fence = false;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        if !in_fence {
            if let Some((s, inline)) = header(line) {
                current = Some(s);
                let body = sections.entry(s).or_default();
                if !inline.is_empty() {
                    body.push_str(&inline);
                    body.push('\n');
                }
                continue;
            }
        }
        if is_fence {
            in_fence = !in_fence;
        }
        if let Some(s) = current {
            let body = sections.entry(s).or_default();
            body.push_str(line);
            body.push('\n');
        }
    }
    sections
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_ticks(s: &str) -> &str {
    let t = s.trim();
    if t.len() >= 2 && t.starts_with('`') && t.ends_with('`') {
        t.trim_matches('`').trim()
    } else {
        t
    }
}

static LABEL_LINE: OnceLock<Regex> = OnceLock::new();
static LIST_ITEM: OnceLock<Regex> = OnceLock::new();

fn label_line() -> &'static Regex {
    LABEL_LINE.get_or_init(|| Regex::new(r"^(?:[-*+]\s+)?`?(<\d+>[A-Za-z0-9_]*\.?)\s*(.*)$").unwrap())
}

fn list_item() -> &'static Regex {
    LIST_ITEM.get_or_init(|| Regex::new(r"^(?:[-*+]|\d+[.)])\s+(.*)$").unwrap())
}

/// Drops a trailing proof (`OBVIOUS`, `BY ...`, ...) from an assertion.
fn strip_trailing_proof(assertion: &str) -> String {
    match find_keyword(assertion, &["PROOF", "BY", "OBVIOUS", "OMITTED"]) {
        Some((i, _)) if i > 0 => assertion[..i].trim().to_string(),
        _ => assertion.trim().to_string(),
    }
}

struct RawSub {
    label: Option<StepLabel>,
    text: String,
}

fn parse_sub_lines(body: &str) -> (Vec<RawSub>, Option<String>) {
    let mut subs: Vec<RawSub> = Vec::new();
    let mut qed = None;
    let mut in_fence = false;
    let mut last_was_sub = false;
    for raw in body.lines() {
        let trimmed = raw.trim();
        if trimmed.starts_with("```") {
            in_fence = !in_fence;
            last_was_sub = false;
            continue;
        }
        if trimmed.is_empty() {
            last_was_sub = false;
            continue;
        }
        if let Some(c) = label_line().captures(trimmed) {
            let rest = c[2].trim().trim_end_matches('`').trim().to_string();
            if let Ok(label) = crate::proof_ast::parse_step_label(&c[1]) {
                if label.is_qed() || first_word(&rest) == "QED" {
                    let clause = rest.trim_start_matches("QED").trim().to_string();
                    qed = Some(clause);
                    last_was_sub = false;
                } else {
                    subs.push(RawSub {
                        label: Some(label),
                        text: rest,
                    });
                    last_was_sub = true;
                }
                continue;
            }
        }
        let continuation = last_was_sub
            && (raw.starts_with(char::is_whitespace)
                || trimmed.starts_with("/\\")
                || trimmed.starts_with("\\/"));
        if continuation {
            if let Some(s) = subs.last_mut() {
                s.text.push(' ');
                s.text.push_str(trimmed);
            }
            continue;
        }
        if let Some(c) = list_item().captures(trimmed) {
            subs.push(RawSub {
                label: None,
                text: strip_ticks(&c[1]).to_string(),
            });
            last_was_sub = true;
            continue;
        }
        if in_fence {
            subs.push(RawSub {
                label: None,
                text: trimmed.to_string(),
            });
            last_was_sub = true;
            continue;
        }
        last_was_sub = false;
    }
    (subs, qed)
}

fn assign_labels(raw: Vec<RawSub>) -> Vec<(StepLabel, String)> {
    let level = raw.iter().find_map(|s| s.label.as_ref().map(StepLabel::level)).unwrap_or(1);
    let mut names = std::collections::HashSet::new();
    let consistent = raw.iter().all(|s| {
        s.label
            .as_ref()
            .is_some_and(|l| l.level() == level && names.insert(l.reference()))
    });
    raw.into_iter()
        .enumerate()
        .map(|(i, s)| {
            let label = match (consistent, s.label) {
                (true, Some(l)) => l,
                _ => StepLabel::numbered(level, i + 1),
            };
            (label, strip_trailing_proof(&s.text))
        })
        .filter(|(_, a)| !a.is_empty())
        .collect()
}

fn clean_qed(text: &str) -> String {
    let t = normalize_whitespace(&strip_fences(text));
    let t = strip_ticks(&t).to_string();
    let t = match label_line().captures(&t) {
        Some(c) => c[2].to_string(),
        None => t,
    };
    let t = t.trim();
    let t = t.strip_prefix("QED").map(str::trim).unwrap_or(t);
    t.to_string()
}

fn synthesized_qed(subs: &[(StepLabel, String)], defs: &[&str]) -> String {
    let refs: Vec<String> = subs.iter().map(|(l, _)| l.reference()).collect();
    let mut s = format!("BY {}", refs.join(", "));
    if !defs.is_empty() {
        s.push_str(" DEF ");
        s.push_str(&defs.join(", "));
    }
    s
}

fn section_text(sections: &HashMap<Section, String>, s: Section) -> Result<String> {
    let body = sections
        .get(&s)
        .map(|b| b.trim().to_string())
        .ok_or_else(|| PromptError::MissingSection(s.name().to_string()))?;
    Ok(body)
}

/// Splits a decomposition response into its sections. A missing QED clause
/// becomes `BY` over all sub labels.
pub fn parse_decomposition_response(text: &str) -> Result<DecompositionProposal> {
    parse_with_definitions(text, &[])
}

fn parse_with_definitions(text: &str, defs: &[&str]) -> Result<DecompositionProposal> {
    let sections = split_sections(text);
    let echoed = section_text(&sections, Section::Original)?;
    let reasoning = section_text(&sections, Section::Reasoning)?;
    let strategy = section_text(&sections, Section::Strategy)?;
    let subs_body = section_text(&sections, Section::Subs)?;
    if echoed.trim().is_empty() {
        return Err(PromptError::MissingSection(Section::Original.name().into()));
    }
    let (raw, inline_qed) = parse_sub_lines(&subs_body);
    let subs = assign_labels(raw);
    if subs.is_empty() {
        return Err(PromptError::NoSubObligations);
    }
    let qed = sections
        .get(&Section::Qed)
        .map(|q| clean_qed(q))
        .filter(|q| !q.is_empty())
        .or_else(|| inline_qed.map(|q| clean_qed(&q)).filter(|q| !q.is_empty()))
        .unwrap_or_else(|| synthesized_qed(&subs, defs));
    Ok(DecompositionProposal {
        echoed_obligation: echoed,
        reasoning,
        proof_strategy: strategy,
        sub_obligations: subs,
        qed_clause: qed,
    })
}

/// The echoed obligation with fences, a `THEOREM Name ==` prefix and any
/// `ASSUME ... PROVE` head removed.
fn echo_core(echo: &str) -> String {
    static THEOREM_HEAD: OnceLock<Regex> = OnceLock::new();
    let re = THEOREM_HEAD
        .get_or_init(|| Regex::new(r"^(?:THEOREM|LEMMA|PROPOSITION|COROLLARY)\s+(?:[A-Za-z0-9_]+\s*==\s*)?").unwrap());
    let t = normalize_whitespace(&strip_fences(echo));
    let t = strip_ticks(&t).to_string();
    re.replace(&t, "").trim().trim_end_matches('.').trim().to_string()
}

fn echo_matches(echo: &str, obl: &Obligation) -> bool {
    let core = echo_core(echo);
    let assertion = obl.normalized_assertion();
    if core == assertion || core == normalize_whitespace(&obl.statement()) {
        return true;
    }
    match find_keyword(&core, &["PROVE"]) {
        Some((i, _)) => core[i + "PROVE".len()..].trim() == assertion,
        None => false,
    }
}

/// Parses a response to a decomposition or refinement prompt for `obl`,
/// checking the echoed obligation and synthesizing a missing QED clause
/// from the sub labels and the obligation's definitions.
pub fn parse_decomposition_for(text: &str, obl: &Obligation) -> Result<DecompositionProposal> {
    let names = obl.definition_names();
    let p = parse_with_definitions(text, &names)?;
    if !echo_matches(&p.echoed_obligation, obl) {
        return Err(PromptError::ObligationMismatch {
            expected: obl.normalized_assertion(),
            echoed: normalize_whitespace(&p.echoed_obligation),
        });
    }
    Ok(p)
}

fn is_proof_line(line: &str) -> bool {
    let t = line.trim_start();
    if t.starts_with('<') && t[1..].starts_with(|c: char| c.is_ascii_digit()) {
        return true;
    }
    matches!(first_word(t), "PROOF" | "BY" | "OBVIOUS" | "OMITTED" | "QED")
}

fn extract_proof(chunk: &str, stop_at_prose: bool) -> Option<String> {
    let lines: Vec<&str> = chunk.lines().collect();
    let start = lines.iter().position(|l| is_proof_line(l))?;
    let mut out: Vec<&str> = Vec::new();
    let mut blank = false;
    for l in &lines[start..] {
        let t = l.trim();
        if t.starts_with("====") {
            break;
        }
        if t.is_empty() {
            blank = true;
            continue;
        }
        if stop_at_prose && !l.starts_with(char::is_whitespace) && !is_proof_line(l) && (blank || out.is_empty()) {
            break;
        }
        if blank && !out.is_empty() {
            out.push("");
        }
        blank = false;
        out.push(l);
    }
    let text = out.join("\n");
    let min_indent = out
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let dedented: Vec<&str> = text.lines().map(|l| if l.len() >= min_indent { &l[min_indent..] } else { l.trim_start() }).collect();
    Some(dedented.join("\n").trim_end().to_string())
}

fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(b) => blocks.push(b.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(b) = current.as_mut() {
            b.push(line);
        }
    }
    if let Some(b) = current {
        blocks.push(b.join("\n"));
    }
    blocks
}

/// Extracts the bare proof body from a proof-generation response.
pub fn parse_proof_response(text: &str) -> Result<String> {
    let fenced = fenced_blocks(text);
    let body = if fenced.iter().any(|b| !b.trim().is_empty()) {
        fenced
            .iter()
            .filter(|b| !b.trim().is_empty())
            .find_map(|b| extract_proof(b, false))
            .or_else(|| fenced.iter().find(|b| !b.trim().is_empty()).map(|b| b.trim().to_string()))
    } else {
        let outside = strip_fences(text);
        extract_proof(&outside, true).or_else(|| Some(outside.trim().to_string()))
    };
    match body {
        Some(b) if !b.trim().is_empty() => Ok(b),
        _ => Err(PromptError::EmptyProof),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusRecord;
    use crate::proof_ast::{ProofStatement, StatementSource};
    use crate::retrieval::ScoredRecord;
    use crate::verifier::{Location, ObligationReport, ObligationStatus};

    fn even() -> Obligation {
        Obligation::new("EvenDouble", "Even(x + x)")
            .with_definition("Even(n) == n % 2 = 0")
            .with_extends("Naturals")
            .with_assume("NEW x \\in Nat")
    }

    const RESPONSE: &str = "## ORIGINAL OBLIGATION:
ASSUME NEW x \\in Nat PROVE Even(x + x)

**DECOMPOSITION REASONING:**
Rewrite the sum as a product, then show the product is even.

PROOF STRATEGY:
x + x equals 2 * x, and any multiple of 2 is even by definition.

SUB-OBLIGATIONS:
```tla
<1>1. x + x = 2 * x
<1>2. Even(2 * x)
```
";

    #[test]
    fn even_response_parses_with_synthesized_qed() {
        let p = parse_decomposition_for(RESPONSE, &even()).unwrap();
        assert_eq!(
            p.sub_obligations,
            vec![
                (StepLabel::numbered(1, 1), "x + x = 2 * x".to_string()),
                (StepLabel::numbered(1, 2), "Even(2 * x)".to_string())
            ]
        );
        assert_eq!(p.qed_clause, "BY <1>1, <1>2 DEF Even");
        assert_eq!(parse_decomposition_response(RESPONSE).unwrap().qed_clause, "BY <1>1, <1>2");
    }

    #[test]
    fn missing_and_empty_sections() {
        let no_strategy = RESPONSE.replace("PROOF STRATEGY:", "Strategy notes");
        assert_eq!(
            parse_decomposition_response(&no_strategy),
            Err(PromptError::MissingSection("proof strategy".into()))
        );
        let prose = "ORIGINAL OBLIGATION: Even(x + x)\nDECOMPOSITION REASONING: r\nPROOF STRATEGY: s\nSUB-OBLIGATIONS:\nFirst show the sum is a product and then that it is even.\n";
        assert_eq!(parse_decomposition_response(prose), Err(PromptError::NoSubObligations));
        assert_eq!(parse_decomposition_response(""), Err(PromptError::MissingSection("original obligation".into())));
    }

    #[test]
    fn echo_must_match_request() {
        let other = RESPONSE.replace("PROVE Even(x + x)", "PROVE Even(x)");
        assert!(matches!(
            parse_decomposition_for(&other, &even()),
            Err(PromptError::ObligationMismatch { .. })
        ));
        let theorem = RESPONSE.replace("ASSUME NEW x \\in Nat PROVE Even(x + x)", "`THEOREM EvenDouble == Even(x  + x)`");
        assert!(parse_decomposition_for(&theorem, &even()).is_ok());
    }

    #[test]
    fn unlabeled_and_inline_forms() {
        let text = "ORIGINAL OBLIGATION: Even(x + x)\nDECOMPOSITION REASONING: r\nPROOF STRATEGY: s\nSUB-OBLIGATIONS:\n- `x + x = 2 * x`\n- Even(2 * x) OBVIOUS\nQED CLAUSE: `<1>. QED BY <1>1, <1>2 DEF Even`\n";
        let p = parse_decomposition_response(text).unwrap();
        assert_eq!(p.sub_obligations[1], (StepLabel::numbered(1, 2), "Even(2 * x)".to_string()));
        assert_eq!(p.qed_clause, "BY <1>1, <1>2 DEF Even");
        let multi = "ORIGINAL OBLIGATION: P\nDECOMPOSITION REASONING: r\nPROOF STRATEGY: s\nSUB-OBLIGATIONS:\n<1>1. /\\ a = 1\n      /\\ b = 2\n<1>2. c\n<1>. QED BY <1>1, <1>2\n";
        let p = parse_decomposition_response(multi).unwrap();
        assert_eq!(p.sub_obligations[0].1, "/\\ a = 1 /\\ b = 2");
        assert_eq!(p.qed_clause, "BY <1>1, <1>2");
    }

    #[test]
    fn relabeling_rewrites_qed_refs() {
        let p = parse_decomposition_response(RESPONSE).unwrap().at_level(3);
        assert_eq!(p.sub_obligations[0].0, StepLabel::numbered(3, 1));
        assert_eq!(p.qed_clause, "BY <3>1, <3>2");
        assert_eq!(p.at_level(1), parse_decomposition_response(RESPONSE).unwrap());
    }

    #[test]
    fn decomposition_prompt_contents() {
        let p = render_decomposition_prompt(&even());
        assert_eq!(p.kind, PromptKind::Decompose);
        assert!(p.text.contains("Even(n) == n % 2 = 0"));
        assert!(p.text.contains("Even(x + x)"));
        for h in ["ORIGINAL OBLIGATION:", "DECOMPOSITION REASONING:", "PROOF STRATEGY:", "SUB-OBLIGATIONS:"] {
            assert!(p.text.contains(h), "{h}");
        }
        let bare = render_decomposition_prompt(&Obligation::new("t", "TRUE"));
        assert!(bare.text.contains("DEFINITIONS:\n(none)"));
        assert_eq!(render_decomposition_prompt(&even()), p);
    }

    #[test]
    fn refinement_prompt_quotes_failure() {
        let proposal = parse_decomposition_for(RESPONSE, &even()).unwrap();
        let feedback = VerificationResult::from_obligations(
            vec![ObligationReport {
                location: Location {
                    label: Some(StepLabel::qed(1)),
                    ..Location::default()
                },
                status: ObligationStatus::Failed,
                message: "Zenon: no proof found".into(),
            }],
            3,
        );
        let p = render_refinement_prompt(&even(), &proposal, &feedback).unwrap();
        assert!(p.text.contains("<1>2. Even(2 * x)"));
        assert!(p.text.contains("Zenon: no proof found"));
        assert!(p.text.contains("address the issues that led to the verification failure"));
        let silent = VerificationResult::failed("", Vec::new(), 0);
        let p = render_refinement_prompt(&even(), &proposal, &silent).unwrap();
        assert!(p.text.contains("Verification failed"));
        let ok = VerificationResult::from_obligations(Vec::new(), 0);
        assert_eq!(render_refinement_prompt(&even(), &proposal, &ok), Err(PromptError::RefineOnSuccess));
    }

    fn refs(texts: &[&str]) -> ReferenceSet<f64> {
        ReferenceSet {
            entries: texts
                .iter()
                .map(|t| ScoredRecord {
                    record: CorpusRecord::new(ProofStatement::new(
                        *t,
                        None,
                        StatementSource {
                            path: "x.tla".into(),
                            theorem: None,
                        },
                    )),
                    score: 0.5,
                })
                .collect(),
            k: texts.len(),
        }
    }

    #[test]
    fn proof_prompt_lists_references() {
        let obl = even().child("s", "Even(2 * x)");
        let p = render_proof_prompt(&obl, &refs(&["x + x = 2 * x OBVIOUS"]));
        assert!(p.text.contains("x + x = 2 * x OBVIOUS"));
        assert!(p.text.contains("Even(2 * x)"));
        let bare = render_proof_prompt(&obl, &ReferenceSet::<f64>::empty());
        assert!(!bare.text.contains("EXAMPLE"));
        assert!(!bare.text.contains("\n\n\n"));
    }

    #[test]
    fn baselines() {
        let m = render_baseline_prompt(BaselineStyle::Minimal, "Even(x+x)").unwrap();
        assert_eq!(m.text, "Prove the following theorem in TLA+:\n\nTheorem H: Even(x+x).\n");
        assert!(render_baseline_prompt(BaselineStyle::CoT, "t").unwrap().text.contains("Think through the proof step-by-step"));
        assert!(render_baseline_prompt(BaselineStyle::ToT, "t").unwrap().text.contains("Explore different proof paths"));
        assert!(render_baseline_prompt(BaselineStyle::GoT, "t").unwrap().text.contains("Create a network of related concepts"));
        assert_eq!(render_baseline_prompt(BaselineStyle::GoT, " "), Err(PromptError::EmptyTheorem));
    }

    #[test]
    fn substitution_is_single_pass() {
        assert_eq!(substitute("{{a}} {{b}} {{c}}", &[("a", "{{b}}"), ("b", "B")]), "{{b}} B {{c}}");
        assert_eq!(substitute("open {{a", &[("a", "x")]), "open {{a");
    }

    #[test]
    fn template_dir_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("baseline_minimal.txt"), "Custom: {{theorem}}").unwrap();
        let t = Templates::from_dir(dir.path()).unwrap();
        assert_eq!(t.baseline(BaselineStyle::Minimal, "T").unwrap().text, "Custom: T");
        assert_eq!(t.get(PromptKind::Decompose), Templates::builtin().get(PromptKind::Decompose));
    }

    #[test]
    fn proof_response_extraction() {
        assert_eq!(parse_proof_response("```\nOBVIOUS\n```").unwrap(), "OBVIOUS");
        assert_eq!(
            parse_proof_response("Here is the proof:\n\n```tla\nBY DEF Even\n```\nThis works because...").unwrap(),
            "BY DEF Even"
        );
        assert_eq!(
            parse_proof_response("The step follows directly.\n<1>1. a OBVIOUS\n<1>. QED BY <1>1\n\nHope this helps!").unwrap(),
            "<1>1. a OBVIOUS\n<1>. QED BY <1>1"
        );
        assert_eq!(parse_proof_response(" \n\t"), Err(PromptError::EmptyProof));
        assert_eq!(parse_proof_response("```\n\n```"), Err(PromptError::EmptyProof));
        let module = "```\n---- MODULE M ----\nTHEOREM T == x = x\n  OBVIOUS\n====\n```";
        assert_eq!(parse_proof_response(module).unwrap(), "OBVIOUS");
    }
}
