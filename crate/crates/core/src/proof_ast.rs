//! TLAPS proof scripts at step granularity.
//!
//! Only the proof-structure layer of TLA+ is understood here: module header,
//! `EXTENDS`, definitions (kept verbatim), theorems, and hierarchical proof
//! steps. Expressions are carried as opaque text. Multi-line step text keeps
//! its indentation relative to the step's label column, so bulleted
//! conjunction lists survive a parse/render cycle.

use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::{
    blank_comments, find_keyword, first_word, normalize_whitespace, shift_step_refs,
    split_top_level_commas,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProofAstError {
    #[error("malformed step label `{0}`")]
    MalformedLabel(String),
    #[error("no `---- MODULE <name> ----` header found")]
    MissingModuleHeader,
    #[error("step {label} on line {line} skips a proof level (enclosing level is {parent})")]
    UnbalancedProofLevels { label: String, line: usize, parent: u32 },
    #[error("step {label} on line {line} has both a leaf proof and sub-steps")]
    MixedProof { label: String, line: usize },
    #[error("cannot render node {label}: {reason}")]
    UnrenderableNode { label: String, reason: String },
    #[error("duplicate step label {0}")]
    DuplicateLabel(String),
    #[error("a decomposition needs at least one sub-obligation")]
    EmptySubs,
    #[error("sub-obligation labels must all share one level")]
    MixedLevels,
    #[error("invalid obligation: {0}")]
    InvalidObligation(String),
}

pub type Result<T, E = ProofAstError> = std::result::Result<T, E>;

const PROOF_KEYWORDS: [&str; 4] = ["PROOF", "BY", "OBVIOUS", "OMITTED"];
const THEOREM_KEYWORDS: [&str; 4] = ["THEOREM", "LEMMA", "PROPOSITION", "COROLLARY"];
const DECLARATION_KEYWORDS: [&str; 9] = [
    "CONSTANT",
    "CONSTANTS",
    "VARIABLE",
    "VARIABLES",
    "PARAMETER",
    "PARAMETERS",
    "ASSUME",
    "ASSUMPTION",
    "AXIOM",
];
const TOP_KEYWORDS: [&str; 16] = [
    "EXTENDS",
    "CONSTANT",
    "CONSTANTS",
    "VARIABLE",
    "VARIABLES",
    "PARAMETER",
    "PARAMETERS",
    "ASSUME",
    "ASSUMPTION",
    "AXIOM",
    "INSTANCE",
    "LOCAL",
    "RECURSIVE",
    "USE",
    "HIDE",
    "SPECIFICATION",
];

static MODULE_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*-{4,}\s*MODULE\s+([A-Za-z0-9_]+)\s*-{4,}\s*$").unwrap());
static MODULE_FOOTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*={4,}\s*$").unwrap());
static SEPARATOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*-{4,}").unwrap());
static DEFINITION_START: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:LOCAL\s+)?(?:([A-Za-z_][A-Za-z0-9_]*)\s*(?:\([^)]*\)|\[[^\]]*\])?\s*==|[A-Za-z_][A-Za-z0-9_]*\s+(\S+)\s+[A-Za-z_][A-Za-z0-9_]*\s*==)",
    )
    .unwrap()
});
static THEOREM_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\s*==").unwrap());
static IDENTIFIER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").unwrap());

// ---------------------------------------------------------------------------
// Step labels

/// The name part of a step label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepName {
    /// `<1>1`, `<2>a`, `<3>10`.
    Named(String),
    /// `<2>. QED`.
    Qed,
    /// A bare `<2>.` on a non-QED step.
    Unnamed,
}

/// `<level>name` identifier of a proof step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StepLabel {
    level: u32,
    name: StepName,
}

impl StepLabel {
    pub fn new(level: u32, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let valid = level >= 1
            && !name.is_empty()
            && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_');
        if !valid {
            return Err(ProofAstError::MalformedLabel(format!("<{level}>{name}")));
        }
        Ok(Self {
            level,
            name: StepName::Named(name),
        })
    }

    /// `<level>n` for a positive step number.
    pub fn numbered(level: u32, n: usize) -> Self {
        Self::new(level.max(1), n.to_string()).expect("numeric step names are valid")
    }

    pub fn qed(level: u32) -> Self {
        Self {
            level: level.max(1),
            name: StepName::Qed,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn name(&self) -> &StepName {
        &self.name
    }

    pub fn is_qed(&self) -> bool {
        self.name == StepName::Qed
    }

    /// The form used to cite the step in a `BY` clause, e.g. `<1>2`.
    pub fn reference(&self) -> String {
        match &self.name {
            StepName::Named(n) => format!("<{}>{}", self.level, n),
            StepName::Qed | StepName::Unnamed => format!("<{}>", self.level),
        }
    }

    /// The form that opens a step line, e.g. `<1>2.` or `<2>.`.
    pub fn step_prefix(&self) -> String {
        match &self.name {
            StepName::Named(n) => format!("<{}>{}.", self.level, n),
            StepName::Qed | StepName::Unnamed => format!("<{}>.", self.level),
        }
    }

    /// Same name at another level.
    pub fn with_level(&self, level: u32) -> Self {
        Self {
            level: level.max(1),
            name: self.name.clone(),
        }
    }
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            StepName::Named(n) => write!(f, "<{}>{}", self.level, n),
            StepName::Qed => write!(f, "<{}>. QED", self.level),
            StepName::Unnamed => write!(f, "<{}>.", self.level),
        }
    }
}

impl From<StepLabel> for String {
    fn from(label: StepLabel) -> Self {
        label.to_string()
    }
}

impl TryFrom<String> for StepLabel {
    type Error = ProofAstError;

    fn try_from(value: String) -> Result<Self> {
        parse_step_label(&value)
    }
}

/// Recognizes a label at the start of `s`. Returns the level, the optional
/// name and the number of bytes consumed (including a trailing `.`). The
/// label must be followed by whitespace or the end of input.
fn scan_label(s: &str) -> Option<(u32, Option<&str>, usize)> {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'<') {
        return None;
    }
    let mut i = 1;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == 1 || bytes.get(i) != Some(&b'>') {
        return None;
    }
    let level: u32 = s[1..i].parse().ok()?;
    if level == 0 {
        return None;
    }
    i += 1;
    let name_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
        i += 1;
    }
    let name = (i > name_start).then(|| &s[name_start..i]);
    if bytes.get(i) == Some(&b'.') {
        i += 1;
    }
    match bytes.get(i) {
        None => Some((level, name, i)),
        Some(b) if b.is_ascii_whitespace() => Some((level, name, i)),
        _ => None,
    }
}

/// Parses a standalone step label such as `<1>1`, `<3>10.` or `<2>. QED`.
pub fn parse_step_label(text: &str) -> Result<StepLabel> {
    let malformed = || ProofAstError::MalformedLabel(text.to_string());
    let trimmed = text.trim();
    let (level, name, used) = scan_label(trimmed).ok_or_else(malformed)?;
    let rest = trimmed[used..].trim();
    match (name, rest) {
        (Some(n), "") | (Some(n), "QED") => Ok(StepLabel {
            level,
            name: StepName::Named(n.to_string()),
        }),
        (None, "QED") => Ok(StepLabel::qed(level)),
        (None, "") if trimmed.ends_with('.') => Ok(StepLabel {
            level,
            name: StepName::Unnamed,
        }),
        _ => Err(malformed()),
    }
}

// ---------------------------------------------------------------------------
// Proof trees

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProofStatus {
    #[default]
    Unproven,
    DecompositionAccepted,
    Verified,
    Failed,
}

/// One node of a hierarchical proof.
///
/// The root of a theorem's proof has no label and an empty assertion. The QED
/// step of an internal node is kept as its last child (assertion `QED`,
/// proof body = the QED clause), which keeps child levels uniform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofNode {
    pub label: Option<StepLabel>,
    pub assertion: String,
    pub proof_body: String,
    pub children: Vec<ProofNode>,
    pub status: ProofStatus,
}

impl ProofNode {
    pub fn leaf(label: StepLabel, assertion: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            label: Some(label),
            assertion: assertion.into(),
            proof_body: body.into(),
            children: Vec::new(),
            status: ProofStatus::Unproven,
        }
    }

    /// An internal step. `qed_clause` becomes the body of an appended
    /// `<l+1>. QED` child.
    pub fn internal(
        label: StepLabel,
        assertion: impl Into<String>,
        children: Vec<ProofNode>,
        qed_clause: impl Into<String>,
    ) -> Self {
        let level = label.level + 1;
        let mut node = Self {
            label: Some(label),
            assertion: assertion.into(),
            proof_body: String::new(),
            children,
            status: ProofStatus::Unproven,
        };
        node.children.push(Self::qed_step(level, qed_clause));
        node
    }

    pub fn root_leaf(body: impl Into<String>) -> Self {
        Self {
            label: None,
            assertion: String::new(),
            proof_body: body.into(),
            children: Vec::new(),
            status: ProofStatus::Unproven,
        }
    }

    pub fn root_internal(children: Vec<ProofNode>, qed_clause: impl Into<String>) -> Self {
        let level = children
            .first()
            .and_then(|c| c.label.as_ref())
            .map_or(1, |l| l.level);
        let mut node = Self::root_leaf("");
        node.children = children;
        node.children.push(Self::qed_step(level, qed_clause));
        node
    }

    pub fn unproven_root() -> Self {
        Self::root_leaf("")
    }

    fn qed_step(level: u32, clause: impl Into<String>) -> Self {
        Self::leaf(StepLabel::qed(level), "QED", clause)
    }

    pub fn with_status(mut self, status: ProofStatus) -> Self {
        self.status = status;
        self
    }

    pub fn is_qed(&self) -> bool {
        self.assertion == "QED"
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Level of this node; the unlabeled root sits one above its children.
    pub fn level(&self) -> u32 {
        match &self.label {
            Some(l) => l.level,
            None => self
                .children
                .first()
                .and_then(|c| c.label.as_ref())
                .map_or(0, |l| l.level.saturating_sub(1)),
        }
    }

    /// The QED clause of an internal node.
    pub fn qed_clause(&self) -> Option<&str> {
        self.children
            .last()
            .filter(|c| c.is_qed())
            .map(|c| c.proof_body.as_str())
    }

    /// Children other than the closing QED step.
    pub fn sub_steps(&self) -> &[ProofNode] {
        match self.children.last() {
            Some(c) if c.is_qed() => &self.children[..self.children.len() - 1],
            _ => &self.children,
        }
    }

    /// Number of label levels below this node (0 for a leaf).
    pub fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| 1 + c.depth())
            .max()
            .unwrap_or(0)
    }

    /// Labeled steps in this subtree (including this node if labeled).
    pub fn step_count(&self) -> usize {
        usize::from(self.label.is_some()) + self.children.iter().map(Self::step_count).sum::<usize>()
    }

    pub fn is_fully_verified(&self) -> bool {
        self.status == ProofStatus::Verified && self.children.iter().all(Self::is_fully_verified)
    }

    pub fn set_status_recursive(&mut self, status: ProofStatus) {
        self.status = status;
        for c in &mut self.children {
            c.set_status_recursive(status);
        }
    }

    /// Moves every label in the subtree `delta` levels down and rewrites step
    /// references in assertion and proof text accordingly.
    pub fn shift_levels(&mut self, delta: u32) {
        if delta == 0 {
            return;
        }
        if let Some(label) = &mut self.label {
            label.level += delta;
        }
        self.assertion = shift_step_refs(&self.assertion, delta);
        self.proof_body = shift_step_refs(&self.proof_body, delta);
        for c in &mut self.children {
            c.shift_levels(delta);
        }
    }

    /// Structural equality ignoring status and whitespace layout.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.label == other.label
            && normalize_whitespace(&self.assertion) == normalize_whitespace(&other.assertion)
            && normalize_whitespace(&self.proof_body) == normalize_whitespace(&other.proof_body)
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_shape(b))
    }

    /// Checks the node invariants over the whole subtree.
    pub fn validate(&self) -> Result<()> {
        let name = self
            .label
            .as_ref()
            .map_or_else(|| "<root>".to_string(), ToString::to_string);
        let fail = |reason: &str| {
            Err(ProofAstError::UnrenderableNode {
                label: name.clone(),
                reason: reason.to_string(),
            })
        };
        let has_body = !self.proof_body.trim().is_empty();
        let has_children = !self.children.is_empty();
        if has_body && has_children {
            return fail("node has both a proof body and sub-steps");
        }
        if !has_body && !has_children && self.status != ProofStatus::Unproven {
            return fail("node without proof must be Unproven");
        }
        if self.status == ProofStatus::Verified
            && has_children
            && !self.children.iter().all(|c| c.status == ProofStatus::Verified)
        {
            return fail("Verified node has unverified children");
        }
        let child_level = match &self.label {
            Some(l) => Some(l.level + 1),
            None => self.children.first().and_then(|c| c.label.as_ref()).map(|l| l.level),
        };
        for c in &self.children {
            match (&c.label, child_level) {
                (Some(l), Some(expected)) if l.level == expected => {}
                (Some(l), _) => {
                    return fail(&format!(
                        "child {l} is not at level {}",
                        child_level.unwrap_or(0)
                    ))
                }
                (None, _) => return fail("child step without label"),
            }
            c.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Obligations

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Definition {
    pub name: String,
    pub text: String,
}

impl Definition {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }

    /// Builds a definition from its source text, reading the defined name.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        let name = definition_name(text.trim_start()).unwrap_or_else(|| first_word(&text).to_string());
        Self { name, text }
    }
}

impl<'de> Deserialize<'de> for Definition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Named { name: String, text: String },
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Text(t) => Definition::from_text(t),
            Repr::Named { name, text } => Definition { name, text },
        })
    }
}

fn definition_name(line: &str) -> Option<String> {
    let caps = DEFINITION_START.captures(line)?;
    caps.get(1)
        .or_else(|| caps.get(2))
        .map(|m| m.as_str().to_string())
}

/// A named assertion plus the context needed to state it in a module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub name: String,
    pub assertion: String,
    /// `CONSTANT`/`VARIABLE` declarations and module assumptions, verbatim.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub declarations: Vec<String>,
    #[serde(default)]
    pub definitions: Vec<Definition>,
    #[serde(default, rename = "extends")]
    pub module_context: Vec<String>,
    /// `ASSUME` hypotheses (e.g. `NEW x \in Nat`) under which the assertion
    /// is stated; inherited by sub-obligations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumes: Vec<String>,
}

impl Obligation {
    pub fn new(name: impl Into<String>, assertion: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            assertion: assertion.into(),
            declarations: Vec::new(),
            definitions: Vec::new(),
            module_context: Vec::new(),
            assumes: Vec::new(),
        }
    }

    pub fn with_definition(mut self, text: impl Into<String>) -> Self {
        self.definitions.push(Definition::from_text(text));
        self
    }

    pub fn with_declaration(mut self, text: impl Into<String>) -> Self {
        self.declarations.push(text.into());
        self
    }

    pub fn with_extends(mut self, module: impl Into<String>) -> Self {
        self.module_context.push(module.into());
        self
    }

    pub fn with_assume(mut self, hypothesis: impl Into<String>) -> Self {
        self.assumes.push(hypothesis.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.assertion.trim().is_empty() {
            return Err(ProofAstError::InvalidObligation("assertion is empty".into()));
        }
        let mut seen = HashSet::new();
        for d in &self.definitions {
            if !seen.insert(d.name.as_str()) {
                return Err(ProofAstError::InvalidObligation(format!(
                    "definition `{}` appears twice",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn normalized_assertion(&self) -> String {
        normalize_whitespace(&self.assertion)
    }

    pub fn definition_names(&self) -> Vec<&str> {
        self.definitions.iter().map(|d| d.name.as_str()).collect()
    }

    /// The theorem body: the assertion, wrapped in `ASSUME .. PROVE` when
    /// hypotheses are present.
    pub fn statement(&self) -> String {
        if self.assumes.is_empty() {
            self.assertion.clone()
        } else {
            format!("ASSUME {}\nPROVE  {}", self.assumes.join(",\n       "), self.assertion)
        }
    }

    /// A sub-obligation sharing this obligation's definitions and context.
    pub fn child(&self, name: impl Into<String>, assertion: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            assertion: assertion.into(),
            declarations: self.declarations.clone(),
            definitions: self.definitions.clone(),
            module_context: self.module_context.clone(),
            assumes: self.assumes.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Modules

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem {
    /// `THEOREM`, `LEMMA`, ...
    pub keyword: String,
    pub name: Option<String>,
    pub assertion: String,
    pub proof: ProofNode,
}

impl Theorem {
    /// Restates the theorem as an obligation in the module's context.
    pub fn to_obligation(&self, module: &ParsedModule) -> Obligation {
        let (assumes, assertion) = split_assume_prove(&self.assertion);
        Obligation {
            name: self.name.clone().unwrap_or_else(|| "Goal".to_string()),
            assertion,
            declarations: module.declarations.clone(),
            definitions: module.definitions.clone(),
            module_context: module.extends.clone(),
            assumes,
        }
    }
}

fn split_assume_prove(assertion: &str) -> (Vec<String>, String) {
    let trimmed = assertion.trim();
    if first_word(trimmed) == "ASSUME" {
        if let Some((pos, _)) = find_keyword(trimmed, &["PROVE"]) {
            let hyps = &trimmed["ASSUME".len()..pos];
            let goal = trimmed[pos + "PROVE".len()..].trim();
            return (
                split_top_level_commas(hyps)
                    .into_iter()
                    .map(|h| normalize_whitespace(&h))
                    .collect(),
                goal.to_string(),
            );
        }
    }
    (Vec::new(), trimmed.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedModule {
    pub module_name: String,
    pub extends: Vec<String>,
    /// `CONSTANT`, `VARIABLE` and `ASSUME` units, verbatim.
    #[serde(default)]
    pub declarations: Vec<String>,
    pub definitions: Vec<Definition>,
    pub theorems: Vec<Theorem>,
    /// Where the module was read from, when known.
    #[serde(default)]
    pub source_path: Option<String>,
}

impl ParsedModule {
    pub fn theorem(&self, name: &str) -> Option<&Theorem> {
        self.theorems.iter().find(|t| t.name.as_deref() == Some(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnitKind {
    Theorem,
    Definition,
    Declaration,
    Extends,
    Other,
}

struct Line<'a> {
    number: usize,
    indent: usize,
    clean: &'a str,
}

/// Parses a TLA+ module down to proof-step granularity.
pub fn parse_module(text: &str) -> Result<ParsedModule> {
    let cleaned = blank_comments(text);
    let clean_lines: Vec<&str> = cleaned.lines().collect();
    let raw_lines: Vec<&str> = text.lines().collect();

    let (header_idx, module_name) = clean_lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| MODULE_HEADER.captures(l).map(|c| (i, c[1].to_string())))
        .ok_or(ProofAstError::MissingModuleHeader)?;

    let mut units: Vec<(UnitKind, Vec<Line>)> = Vec::new();
    for (i, clean) in clean_lines.iter().enumerate().skip(header_idx + 1) {
        let clean = clean.trim_end();
        if MODULE_FOOTER.is_match(clean) {
            break;
        }
        let trimmed = clean.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let indent = clean.len() - trimmed.len();
        let line = Line {
            number: i + 1,
            indent,
            clean,
        };
        if SEPARATOR.is_match(clean) {
            units.push((UnitKind::Other, Vec::new()));
            continue;
        }
        let word = first_word(trimmed);
        let awaiting_statement = matches!(units.last(), Some((UnitKind::Theorem, ls))
            if ls.len() == 1 && ls[0].clean.trim_end().ends_with("=="));
        let kind = if THEOREM_KEYWORDS.contains(&word) {
            Some(UnitKind::Theorem)
        } else if scan_label(trimmed).is_some() || indent > 0 || awaiting_statement {
            None
        } else if word == "EXTENDS" {
            Some(UnitKind::Extends)
        } else if DECLARATION_KEYWORDS.contains(&word) {
            Some(UnitKind::Declaration)
        } else if TOP_KEYWORDS.contains(&word) {
            Some(UnitKind::Other)
        } else if DEFINITION_START.is_match(trimmed) {
            Some(UnitKind::Definition)
        } else {
            None
        };
        match (kind, units.last_mut()) {
            (Some(k), _) => units.push((k, vec![line])),
            (None, Some((_, lines))) => lines.push(line),
            (None, None) => units.push((UnitKind::Other, vec![line])),
        }
    }

    let mut module = ParsedModule {
        module_name,
        extends: Vec::new(),
        declarations: Vec::new(),
        definitions: Vec::new(),
        theorems: Vec::new(),
        source_path: None,
    };
    for (kind, lines) in units {
        if lines.is_empty() {
            continue;
        }
        match kind {
            UnitKind::Extends => {
                let joined: Vec<&str> = lines.iter().map(|l| l.clean.trim()).collect();
                let body = joined.join(" ");
                let body = body.trim_start_matches("EXTENDS");
                module
                    .extends
                    .extend(body.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from));
            }
            UnitKind::Declaration => module.declarations.push(unit_text(&raw_lines, &lines)),
            UnitKind::Definition => {
                let text = unit_text(&raw_lines, &lines);
                let name = definition_name(lines[0].clean.trim_start())
                    .unwrap_or_else(|| first_word(lines[0].clean).to_string());
                module.definitions.push(Definition { name, text });
            }
            UnitKind::Theorem => module.theorems.push(parse_theorem(&lines)?),
            UnitKind::Other => {}
        }
    }
    Ok(module)
}

fn unit_text(raw_lines: &[&str], lines: &[Line]) -> String {
    let first = lines[0].number - 1;
    let last = lines[lines.len() - 1].number - 1;
    raw_lines[first..=last]
        .iter()
        .map(|l| l.trim_end())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Joins lines, keeping each continuation line's indentation relative to
/// `base` and stripping the first line's leading whitespace.
fn join_relative<'a>(first: &str, rest: impl Iterator<Item = &'a Line<'a>>, base: usize) -> String {
    let mut text = first.trim().to_string();
    for l in rest {
        let rel = l.indent.saturating_sub(base);
        text.push('\n');
        text.push_str(&" ".repeat(rel));
        text.push_str(l.clean.trim());
    }
    text
}

struct RawStep {
    line: usize,
    label: StepLabel,
    assertion: String,
    body: String,
}

fn split_step_text(text: &str) -> (String, String) {
    if first_word(text) == "QED" {
        return ("QED".to_string(), text.trim_start()[3..].trim().to_string());
    }
    match find_keyword(text, &PROOF_KEYWORDS) {
        Some((pos, kw)) => {
            let assertion = text[..pos].trim_end().to_string();
            let mut body = text[pos..].trim();
            if kw == "PROOF" {
                body = body["PROOF".len()..].trim();
            }
            (assertion, body.to_string())
        }
        None => (text.trim_end().to_string(), String::new()),
    }
}

fn collect_steps(lines: &[Line]) -> Vec<RawStep> {
    let mut steps = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let trimmed = lines[i].clean.trim_start();
        let Some((level, name, used)) = scan_label(trimmed) else {
            i += 1;
            continue;
        };
        let base = lines[i].indent;
        let mut j = i + 1;
        while j < lines.len() && scan_label(lines[j].clean.trim_start()).is_none() {
            j += 1;
        }
        let text = join_relative(&trimmed[used..], lines[i + 1..j].iter(), base);
        let (assertion, body) = split_step_text(&text);
        let label = match name {
            Some(n) => StepLabel {
                level,
                name: StepName::Named(n.to_string()),
            },
            None if assertion == "QED" => StepLabel::qed(level),
            None => StepLabel {
                level,
                name: StepName::Unnamed,
            },
        };
        steps.push(RawStep {
            line: lines[i].number,
            label,
            assertion,
            body,
        });
        i = j;
    }
    steps
}

/// Builds a proof tree from the proof text that precedes the first step
/// (`PROOF`, `OBVIOUS`, `BY ...`) and the labeled steps.
fn build_proof(leading_body: &str, steps: Vec<RawStep>) -> Result<ProofNode> {
    let mut root = ProofNode::root_leaf(leading_body.trim());
    let Some(first) = steps.first() else {
        return Ok(root);
    };
    if !root.proof_body.is_empty() {
        return Err(ProofAstError::MixedProof {
            label: "<root>".into(),
            line: first.line,
        });
    }
    root.proof_body.clear();
    let root_level = first.label.level - 1;
    let mut stack: Vec<(u32, ProofNode)> = vec![(root_level, root)];
    for step in steps {
        while stack.len() > 1 && stack.last().is_some_and(|(lvl, _)| *lvl >= step.label.level) {
            let (_, done) = stack.pop().expect("stack is nonempty");
            stack.last_mut().expect("root stays").1.children.push(done);
        }
        let (parent_level, parent) = stack.last().expect("root stays");
        if step.label.level != parent_level + 1 {
            return Err(ProofAstError::UnbalancedProofLevels {
                label: step.label.to_string(),
                line: step.line,
                parent: *parent_level,
            });
        }
        if !parent.proof_body.is_empty() {
            return Err(ProofAstError::MixedProof {
                label: parent
                    .label
                    .as_ref()
                    .map_or_else(|| "<root>".into(), ToString::to_string),
                line: step.line,
            });
        }
        let level = step.label.level;
        stack.push((level, ProofNode::leaf(step.label, step.assertion, step.body)));
    }
    while stack.len() > 1 {
        let (_, done) = stack.pop().expect("stack is nonempty");
        stack.last_mut().expect("root stays").1.children.push(done);
    }
    Ok(stack.pop().expect("root stays").1)
}

fn parse_theorem(lines: &[Line]) -> Result<Theorem> {
    let first = lines[0].clean.trim_start();
    let keyword = first_word(first).to_string();
    let header_end = lines
        .iter()
        .position(|l| scan_label(l.clean.trim_start()).is_some())
        .unwrap_or(lines.len());
    let header = join_relative(
        &first[keyword.len()..],
        lines[1..header_end.max(1)].iter(),
        lines[0].indent,
    );
    let (name, rest) = match THEOREM_NAME.captures(&header) {
        Some(c) => (Some(c[1].to_string()), header[c[0].len()..].trim_start().to_string()),
        None => (None, header.clone()),
    };
    let (assertion, leading_body) = match find_keyword(&rest, &PROOF_KEYWORDS) {
        Some((pos, kw)) => {
            let mut body = rest[pos..].trim();
            if kw == "PROOF" {
                body = body["PROOF".len()..].trim();
            }
            (rest[..pos].trim_end().to_string(), body.to_string())
        }
        None => (rest.trim_end().to_string(), String::new()),
    };
    let proof = build_proof(&leading_body, collect_steps(&lines[header_end..]))?;
    Ok(Theorem {
        keyword,
        name,
        assertion,
        proof,
    })
}

/// Parses a proof given on its own (a bare `OBVIOUS`, a `BY` clause, or a
/// sequence of labeled steps), as produced for a single obligation.
pub fn parse_proof_text(text: &str) -> Result<ProofNode> {
    let cleaned = blank_comments(text);
    let lines: Vec<Line> = cleaned
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let clean = l.trim_end();
            Line {
                number: i + 1,
                indent: clean.len() - clean.trim_start().len(),
                clean,
            }
        })
        .collect();
    let first_step = lines
        .iter()
        .position(|l| scan_label(l.clean.trim_start()).is_some())
        .unwrap_or(lines.len());
    let leading = match lines.first() {
        Some(l) if first_step > 0 => join_relative(l.clean, lines[1..first_step].iter(), l.indent),
        _ => String::new(),
    };
    let mut leading = leading.trim().to_string();
    if first_word(&leading) == "PROOF" {
        leading = leading["PROOF".len()..].trim().to_string();
    }
    build_proof(&leading, collect_steps(&lines[first_step..]))
}

// ---------------------------------------------------------------------------
// Statements

/// Where a proof statement came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementSource {
    pub path: String,
    pub theorem: Option<String>,
}

/// The text between two step labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStatement {
    pub text: String,
    pub label: Option<StepLabel>,
    pub source: StatementSource,
    pub normalized_text: String,
}

impl ProofStatement {
    pub fn new(text: impl Into<String>, label: Option<StepLabel>, source: StatementSource) -> Self {
        let text = text.into();
        let normalized_text = normalize_whitespace(&text);
        Self {
            text,
            label,
            source,
            normalized_text,
        }
    }
}

/// One statement per labeled step, in document order.
pub fn extract_statements(module: &ParsedModule) -> Vec<ProofStatement> {
    fn walk(node: &ProofNode, source: &StatementSource, out: &mut Vec<ProofStatement>) {
        if let Some(label) = &node.label {
            let text = match (node.assertion.is_empty(), node.proof_body.is_empty()) {
                (false, false) => format!("{} {}", node.assertion, node.proof_body),
                (false, true) => node.assertion.clone(),
                (true, _) => node.proof_body.clone(),
            };
            if !text.trim().is_empty() {
                out.push(ProofStatement::new(text, Some(label.clone()), source.clone()));
            }
        }
        for c in &node.children {
            walk(c, source, out);
        }
    }
    let path = module
        .source_path
        .clone()
        .unwrap_or_else(|| module.module_name.clone());
    let mut out = Vec::new();
    for theorem in &module.theorems {
        let source = StatementSource {
            path: path.clone(),
            theorem: theorem.name.clone(),
        };
        walk(&theorem.proof, &source, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Rendering

/// Line span (1-based, inclusive) of one rendered step, excluding its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSpan {
    pub label: StepLabel,
    pub first_line: usize,
    pub last_line: usize,
}

/// A generated module with the line positions of its steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedModule {
    pub module_name: String,
    pub text: String,
    pub theorem_line: usize,
    pub steps: Vec<StepSpan>,
}

impl RenderedModule {
    /// The innermost step whose own lines contain `line`.
    pub fn step_at_line(&self, line: usize) -> Option<&StepSpan> {
        self.steps
            .iter()
            .rev()
            .find(|s| s.first_line <= line && line <= s.last_line)
    }

    /// Byte range of lines `first..=last` (1-based) in `text`.
    pub fn byte_range(&self, first: usize, last: usize) -> std::ops::Range<usize> {
        let mut start = None;
        let mut offset = 0;
        for (i, l) in self.text.split_inclusive('\n').enumerate() {
            let n = i + 1;
            if n == first {
                start = Some(offset);
            }
            offset += l.len();
            if n == last {
                return start.unwrap_or(offset - l.len())..offset;
            }
        }
        start.unwrap_or(offset)..offset
    }
}

const INLINE_BODY_WIDTH: usize = 100;

#[derive(Default)]
struct Renderer {
    out: String,
    lines: usize,
    spans: Vec<StepSpan>,
}

impl Renderer {
    fn push_line(&mut self, indent: usize, text: &str) {
        self.out.push_str(&" ".repeat(indent));
        self.out.push_str(text);
        self.out.push('\n');
        self.lines += 1;
    }

    fn push_text(&mut self, indent: usize, text: &str) {
        for l in text.lines() {
            self.push_line(indent, l);
        }
    }

    /// Writes `head` + first line of `text`, the remaining lines at `indent`.
    fn push_headed(&mut self, indent: usize, head: &str, text: &str) {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if !head.is_empty() => self.push_line(indent, &format!("{head} {first}")),
            Some(first) => self.push_line(indent, first),
            None => self.push_line(indent, head),
        }
        for l in lines {
            self.push_line(indent, l);
        }
    }

    fn node(&mut self, node: &ProofNode, indent: usize) {
        let first_line = self.lines + 1;
        match &node.label {
            Some(label) => {
                let prefix = label.step_prefix();
                let single = !node.assertion.contains('\n');
                let body_first = node.proof_body.lines().next().unwrap_or("");
                if node.proof_body.is_empty() {
                    self.push_headed(indent, &prefix, &node.assertion);
                } else if single && prefix.len() + node.assertion.len() + body_first.len() + 2 <= INLINE_BODY_WIDTH {
                    let head = if node.assertion.is_empty() {
                        prefix
                    } else {
                        format!("{prefix} {}", node.assertion)
                    };
                    self.push_headed(indent, &head, &node.proof_body);
                } else {
                    self.push_headed(indent, &prefix, &node.assertion);
                    self.push_headed(indent, "", &format!("  {}", node.proof_body));
                }
                self.spans.push(StepSpan {
                    label: label.clone(),
                    first_line,
                    last_line: self.lines,
                });
                for c in &node.children {
                    self.node(c, indent + 2);
                }
            }
            None => {
                let head = node.assertion.trim();
                if !head.is_empty() {
                    self.push_text(indent, head);
                }
                if !node.proof_body.is_empty() {
                    self.push_text(indent, &node.proof_body);
                }
                for c in &node.children {
                    self.node(c, indent);
                }
            }
        }
    }
}

/// Renders a proof tree as TLAPS text. Children are indented two spaces per
/// level below the rendered node.
pub fn render_proof(node: &ProofNode) -> Result<String> {
    node.validate()?;
    let mut r = Renderer::default();
    r.node(node, 0);
    Ok(r.out)
}

fn extends_line(modules: &[String]) -> String {
    let mut seen = HashSet::new();
    let names: Vec<&str> = modules
        .iter()
        .map(String::as_str)
        .chain(std::iter::once("TLAPS"))
        .filter(|m| seen.insert(*m))
        .collect();
    format!("EXTENDS {}", names.join(", "))
}

fn write_theorem(r: &mut Renderer, keyword: &str, name: Option<&str>, statement: &str) -> usize {
    let head = match name {
        Some(n) => format!("{keyword} {n} =="),
        None => keyword.to_string(),
    };
    let line = r.lines + 1;
    r.push_headed(0, &head, statement);
    line
}

/// Renders a self-contained module stating `obl` as a theorem with `proof`.
pub fn render_obligation_module(
    module_name: &str,
    obl: &Obligation,
    proof: &ProofNode,
) -> Result<RenderedModule> {
    obl.validate()?;
    proof.validate()?;
    let mut r = Renderer::default();
    r.push_line(0, &format!("---- MODULE {module_name} ----"));
    r.push_line(0, &extends_line(&obl.module_context));
    for d in &obl.declarations {
        r.push_text(0, d.trim_end());
    }
    for d in &obl.definitions {
        r.push_line(0, "");
        r.push_text(0, d.text.trim_end());
    }
    r.push_line(0, "");
    let name = IDENTIFIER.is_match(&obl.name).then_some(obl.name.as_str());
    let theorem_line = write_theorem(&mut r, "THEOREM", name, &obl.statement());
    r.node(proof, 0);
    r.push_line(0, "====");
    Ok(RenderedModule {
        module_name: module_name.to_string(),
        text: r.out,
        theorem_line,
        steps: r.spans,
    })
}

/// Renders a parsed module back to text.
pub fn render_module(module: &ParsedModule) -> Result<String> {
    let mut r = Renderer::default();
    r.push_line(0, &format!("---- MODULE {} ----", module.module_name));
    if !module.extends.is_empty() {
        r.push_line(0, &format!("EXTENDS {}", module.extends.join(", ")));
    }
    for d in &module.declarations {
        r.push_text(0, d.trim_end());
    }
    for d in &module.definitions {
        r.push_line(0, "");
        r.push_text(0, d.text.trim_end());
    }
    for t in &module.theorems {
        t.proof.validate()?;
        r.push_line(0, "");
        write_theorem(&mut r, &t.keyword, t.name.as_deref(), &t.assertion);
        r.node(&t.proof, 0);
    }
    r.push_line(0, "====");
    Ok(r.out)
}

/// Builds the decomposition-check module: every sub-assertion is `OMITTED`,
/// so the only obligation the prover has to discharge is the QED step.
pub fn decomposition_skeleton_module(
    obl: &Obligation,
    subs: &[(StepLabel, String)],
    qed_clause: &str,
) -> Result<RenderedModule> {
    let first = subs.first().ok_or(ProofAstError::EmptySubs)?;
    let level = first.0.level;
    let mut seen = HashSet::new();
    for (label, _) in subs {
        if label.level != level {
            return Err(ProofAstError::MixedLevels);
        }
        if label.is_qed() || !seen.insert(label.reference()) {
            return Err(ProofAstError::DuplicateLabel(label.to_string()));
        }
    }
    let children = subs
        .iter()
        .map(|(label, assertion)| ProofNode::leaf(label.clone(), assertion.trim(), "OMITTED"))
        .collect();
    let root = ProofNode::root_internal(children, qed_clause.trim());
    render_obligation_module("DecompositionCheck", obl, &root)
}

/// Text of the decomposition-check module for `obl` split into `subs`.
pub fn make_decomposition_skeleton(
    obl: &Obligation,
    subs: &[(StepLabel, String)],
    qed_clause: &str,
) -> Result<String> {
    decomposition_skeleton_module(obl, subs, qed_clause).map(|m| m.text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EVEN: &str = r"---- MODULE EvenDouble ----
EXTENDS Naturals, TLAPS

Even(n) == n % 2 = 0

THEOREM EvenDouble == ASSUME NEW x \in Nat PROVE Even(x + x)
<1>1. x + x = 2 * x OBVIOUS
<1>2. Even(2 * x)
  <2>1. 2 * x \in Nat OBVIOUS
  <2>2. (2 * x) % 2 = 0 OBVIOUS
  <2>. QED BY <2>1, <2>2 DEF Even
<1>. QED BY <1>1, <1>2 DEF Even
====
";

    #[test]
    fn label_examples() {
        assert_eq!(parse_step_label("<1>1").unwrap(), StepLabel::new(1, "1").unwrap());
        assert_eq!(parse_step_label("<2>. QED").unwrap(), StepLabel::qed(2));
        assert_eq!(parse_step_label("<3>10").unwrap(), StepLabel::new(3, "10").unwrap());
        assert_eq!(parse_step_label("<3>10.").unwrap(), StepLabel::new(3, "10").unwrap());
        assert!(matches!(parse_step_label("1>2"), Err(ProofAstError::MalformedLabel(_))));
        assert!(parse_step_label("<0>1").is_err());
        assert!(parse_step_label("<1>1.1").is_err());
        assert!(parse_step_label("<1>").is_err());
        assert!(parse_step_label("<1>a b").is_err());
    }

    #[test]
    fn label_display_reparses() {
        for l in [
            StepLabel::new(1, "1").unwrap(),
            StepLabel::new(4, "a7").unwrap(),
            StepLabel::qed(3),
            StepLabel {
                level: 2,
                name: StepName::Unnamed,
            },
        ] {
            assert_eq!(parse_step_label(&l.to_string()).unwrap(), l);
        }
    }

    #[test]
    fn even_module_shape() {
        let m = parse_module(EVEN).unwrap();
        assert_eq!(m.module_name, "EvenDouble");
        assert_eq!(m.extends, vec!["Naturals", "TLAPS"]);
        assert_eq!(m.definitions.len(), 1);
        assert_eq!(m.definitions[0].name, "Even");
        assert_eq!(m.theorems.len(), 1);
        let t = &m.theorems[0];
        assert_eq!(t.name.as_deref(), Some("EvenDouble"));
        assert_eq!(t.assertion, r"ASSUME NEW x \in Nat PROVE Even(x + x)");
        let root = &t.proof;
        assert_eq!(root.children.len(), 3);
        assert_eq!(root.qed_clause(), Some("BY <1>1, <1>2 DEF Even"));
        assert_eq!(root.children[0].assertion, "x + x = 2 * x");
        assert_eq!(root.children[0].proof_body, "OBVIOUS");
        assert_eq!(root.children[1].children.len(), 3);
        assert_eq!(root.depth(), 2);
    }

    #[test]
    fn bare_obvious_theorem_is_a_leaf() {
        let m = parse_module("---- MODULE M ----\nTHEOREM T == TRUE\nOBVIOUS\n====\n").unwrap();
        let root = &m.theorems[0].proof;
        assert!(root.is_leaf());
        assert_eq!(root.proof_body, "OBVIOUS");
        assert_eq!(m.theorems[0].assertion, "TRUE");
    }

    #[test]
    fn missing_header_is_rejected() {
        assert_eq!(
            parse_module("THEOREM T == TRUE OBVIOUS"),
            Err(ProofAstError::MissingModuleHeader)
        );
    }

    #[test]
    fn skipped_level_is_rejected() {
        let src = "---- MODULE M ----\nTHEOREM TRUE\n<1>1. TRUE\n  <3>1. TRUE OBVIOUS\n<1>. QED\n====\n";
        assert!(matches!(
            parse_module(src),
            Err(ProofAstError::UnbalancedProofLevels { line: 4, .. })
        ));
    }

    #[test]
    fn comments_do_not_create_steps() {
        let src = "---- MODULE M ----\n(* <1>9. fake *)\nTHEOREM TRUE \\* trailing\n<1>1. TRUE OBVIOUS \\* <1>2. nope\n<1>. QED BY <1>1\n====\n";
        let m = parse_module(src).unwrap();
        assert_eq!(m.theorems[0].proof.step_count(), 2);
    }

    #[test]
    fn statements_follow_labels() {
        let mut m = parse_module(EVEN).unwrap();
        m.source_path = Some("EvenDouble.tla".into());
        let s = extract_statements(&m);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0].normalized_text, "x + x = 2 * x OBVIOUS");
        assert_eq!(s[0].label, Some(StepLabel::new(1, "1").unwrap()));
        assert_eq!(s[1].normalized_text, "Even(2 * x)");
        assert_eq!(s[4].normalized_text, "QED BY <2>1, <2>2 DEF Even");
        assert_eq!(s[0].source.theorem.as_deref(), Some("EvenDouble"));
        let empty = parse_module("---- MODULE E ----\nFoo == 1\n====").unwrap();
        assert!(extract_statements(&empty).is_empty());
    }

    #[test]
    fn render_leaf_and_roundtrip() {
        let leaf = ProofNode::leaf(StepLabel::new(1, "1").unwrap(), "x + x = 2 * x", "OBVIOUS");
        assert_eq!(render_proof(&leaf).unwrap(), "<1>1. x + x = 2 * x OBVIOUS\n");
        let m = parse_module(EVEN).unwrap();
        let again = parse_module(&render_module(&m).unwrap()).unwrap();
        assert_eq!(m.theorems, again.theorems);
    }

    #[test]
    fn multiline_bullets_keep_relative_indent() {
        let src = "---- MODULE M ----\nTHEOREM T == TRUE\n  <1>1. /\\ a = 1\n         /\\ b = 2\n       BY DEF Init\n  <1>. QED BY <1>1\n====\n";
        let m = parse_module(src).unwrap();
        let step = &m.theorems[0].proof.children[0];
        assert_eq!(step.assertion, "/\\ a = 1\n       /\\ b = 2");
        assert_eq!(step.proof_body, "BY DEF Init");
        let rendered = render_module(&m).unwrap();
        assert!(rendered.contains("<1>1. /\\ a = 1\n       /\\ b = 2\n"), "{rendered}");
        assert_eq!(parse_module(&rendered).unwrap().theorems, m.theorems);
    }

    #[test]
    fn unrenderable_nodes() {
        let mut bad = ProofNode::internal(
            StepLabel::new(1, "1").unwrap(),
            "P",
            vec![ProofNode::leaf(StepLabel::new(3, "1").unwrap(), "Q", "OBVIOUS")],
            "BY <3>1",
        );
        assert!(matches!(render_proof(&bad), Err(ProofAstError::UnrenderableNode { .. })));
        bad.children.clear();
        bad.proof_body = "OBVIOUS".into();
        assert!(render_proof(&bad).is_ok());
        bad.children.push(ProofNode::leaf(StepLabel::new(2, "1").unwrap(), "Q", "OBVIOUS"));
        assert!(render_proof(&bad).is_err());
    }

    fn even_goal() -> Obligation {
        Obligation::new("EvenDouble", "Even(x + x)")
            .with_definition("Even(n) == n % 2 = 0")
            .with_extends("Naturals")
            .with_assume(r"NEW x \in Nat")
    }

    #[test]
    fn skeleton_for_even_decomposition() {
        let subs = vec![
            (StepLabel::new(1, "1").unwrap(), "x + x = 2 * x".to_string()),
            (StepLabel::new(1, "2").unwrap(), "Even(2 * x)".to_string()),
        ];
        let text = make_decomposition_skeleton(&even_goal(), &subs, "BY <1>1, <1>2 DEF Even").unwrap();
        assert_eq!(text.matches("OMITTED").count(), 2);
        assert_eq!(text.matches("QED").count(), 1);
        assert!(text.contains("<1>. QED BY <1>1, <1>2 DEF Even"));
        assert!(text.contains("EXTENDS Naturals, TLAPS"));
        assert!(text.contains("Even(n) == n % 2 = 0"));
        let parsed = parse_module(&text).unwrap();
        assert_eq!(parsed.theorems[0].proof.children.len(), 3);
    }

    #[test]
    fn skeleton_at_level_two() {
        let goal = even_goal().child("Step2", "Even(2 * x)");
        let subs = vec![
            (StepLabel::new(2, "1").unwrap(), r"2 * x \in Nat".to_string()),
            (StepLabel::new(2, "2").unwrap(), "(2 * x) % 2 = 0".to_string()),
        ];
        let m = decomposition_skeleton_module(&goal, &subs, "BY <2>1, <2>2 DEF Even").unwrap();
        assert!(m.text.contains("<2>. QED BY <2>1, <2>2 DEF Even"));
        let qed = m.steps.iter().find(|s| s.label.is_qed()).unwrap();
        assert!(m.text.lines().nth(qed.first_line - 1).unwrap().contains("QED"));
        assert!(m.text[m.byte_range(qed.first_line, qed.last_line)].contains("QED"));
    }

    #[test]
    fn skeleton_errors() {
        let goal = even_goal();
        assert_eq!(make_decomposition_skeleton(&goal, &[], "BY"), Err(ProofAstError::EmptySubs));
        let l = StepLabel::new(1, "1").unwrap();
        assert!(matches!(
            make_decomposition_skeleton(&goal, &[(l.clone(), "A".into()), (l, "B".into())], "BY"),
            Err(ProofAstError::DuplicateLabel(_))
        ));
        assert_eq!(
            make_decomposition_skeleton(
                &goal,
                &[
                    (StepLabel::new(1, "1").unwrap(), "A".into()),
                    (StepLabel::new(2, "1").unwrap(), "B".into())
                ],
                "BY"
            ),
            Err(ProofAstError::MixedLevels)
        );
    }

    #[test]
    fn standalone_proof_text() {
        assert_eq!(parse_proof_text("OBVIOUS").unwrap(), ProofNode::root_leaf("OBVIOUS"));
        let p = parse_proof_text("PROOF\n<1>1. a = a OBVIOUS\n<1>. QED BY <1>1\n").unwrap();
        assert_eq!(p.children.len(), 2);
        let p = parse_proof_text("<2>1. TRUE OBVIOUS\n<2>2. TRUE OBVIOUS\n<2>. QED BY <2>1, <2>2").unwrap();
        assert_eq!(p.level(), 1);
    }

    #[test]
    fn shifting_levels_rewrites_references() {
        let mut p = parse_proof_text("<1>1. TRUE OBVIOUS\n<1>. QED BY <1>1").unwrap();
        p.shift_levels(2);
        assert_eq!(p.children[0].label, Some(StepLabel::new(3, "1").unwrap()));
        assert_eq!(p.children[1].proof_body, "BY <3>1");
    }

    #[test]
    fn theorem_to_obligation_splits_assume_prove() {
        let m = parse_module(EVEN).unwrap();
        let o = m.theorems[0].to_obligation(&m);
        assert_eq!(o, even_goal().with_extends("TLAPS"));
        assert_eq!(o.statement(), "ASSUME NEW x \\in Nat\nPROVE  Even(x + x)");
    }

    #[test]
    fn obligation_validation() {
        assert!(Obligation::new("A", "  ").validate().is_err());
        let dup = Obligation::new("A", "P").with_definition("F == 1").with_definition("F == 2");
        assert!(dup.validate().is_err());
        assert_eq!(Definition::from_text("Foo(a, b) == a").name, "Foo");
        assert_eq!(Definition::from_text("f[n \\in Nat] == n").name, "f");
        assert_eq!(Definition::from_text("a \\prec b == a < b").name, "\\prec");
    }
}
