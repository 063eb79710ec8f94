//! The proof-statement database: building it from a tree of TLA+ modules,
//! excluding evaluation material, and persisting it as line-delimited JSON.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use globset::{Glob, GlobBuilder, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::proof_ast::{extract_statements, parse_module, ProofStatement, StatementSource, StepLabel};
use crate::retrieval::{Embedder, Embedding, RetrievalError};
use crate::scalar::Scalar;
use crate::text::sha256_hex;

pub const CORPUS_FORMAT: &str = "corpus/1";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("no .tla files found under {0:?}")]
    NoInputFiles(Vec<PathBuf>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid exclusion pattern {pattern:?}: {message}")]
    Exclusion { pattern: String, message: String },
    #[error(transparent)]
    Embedding(#[from] RetrievalError),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Content-derived record id: the first 32 hex digits of SHA-256.
pub fn record_id(normalized_text: &str) -> String {
    let mut h = sha256_hex(normalized_text);
    h.truncate(32);
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord<T: Scalar = f64> {
    pub id: String,
    pub statement: ProofStatement,
    pub embedding: Option<Embedding<T>>,
}

impl<T: Scalar> CorpusRecord<T> {
    pub fn new(statement: ProofStatement) -> Self {
        Self {
            id: record_id(&statement.normalized_text),
            statement,
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Embedding<T>) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// Path globs and theorem-name patterns whose proofs must stay out of the
/// corpus.
///
/// Path globs are tested against the full path, the path relative to its
/// corpus root, and the bare file name. Theorem patterns are globs over
/// theorem names; unnamed theorems only match through their file.
#[derive(Debug, Clone)]
pub struct ExclusionSet {
    path_patterns: Vec<String>,
    theorem_patterns: Vec<String>,
    paths: GlobSet,
    theorems: GlobSet,
}

impl Default for ExclusionSet {
    fn default() -> Self {
        Self::none()
    }
}

fn compile(patterns: &[String], literal_separator: bool) -> Result<GlobSet> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let glob = if literal_separator {
            GlobBuilder::new(p).literal_separator(true).build()
        } else {
            Glob::new(p)
        }
        .map_err(|e| CorpusError::Exclusion {
            pattern: p.clone(),
            message: e.to_string(),
        })?;
        b.add(glob);
    }
    b.build().map_err(|e| CorpusError::Exclusion {
        pattern: patterns.join(", "),
        message: e.to_string(),
    })
}

impl ExclusionSet {
    pub fn none() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty pattern set compiles")
    }

    pub fn new(path_patterns: Vec<String>, theorem_patterns: Vec<String>) -> Result<Self> {
        let paths = compile(&path_patterns, false)?;
        let theorems = compile(&theorem_patterns, true)?;
        Ok(Self {
            path_patterns,
            theorem_patterns,
            paths,
            theorems,
        })
    }

    /// Parses the exclusion file format: one `path:<glob>` or
    /// `theorem:<pattern>` per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut paths = Vec::new();
        let mut theorems = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(p) = line.strip_prefix("path:") {
                paths.push(p.trim().to_string());
            } else if let Some(t) = line.strip_prefix("theorem:") {
                theorems.push(t.trim().to_string());
            } else {
                return Err(CorpusError::Exclusion {
                    pattern: line.to_string(),
                    message: "expected `path:<glob>` or `theorem:<pattern>`".into(),
                });
            }
        }
        Self::new(paths, theorems)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.path_patterns.is_empty() && self.theorem_patterns.is_empty()
    }

    pub fn path_patterns(&self) -> &[String] {
        &self.path_patterns
    }

    pub fn theorem_patterns(&self) -> &[String] {
        &self.theorem_patterns
    }

    pub fn matches_path(&self, path: &Path, root: Option<&Path>) -> bool {
        if self.paths.is_empty() {
            return false;
        }
        if self.paths.is_match(path) {
            return true;
        }
        if let Some(rel) = root.and_then(|r| path.strip_prefix(r).ok()) {
            if self.paths.is_match(rel) {
                return true;
            }
        }
        path.file_name().is_some_and(|n| self.paths.is_match(Path::new(n)))
    }

    pub fn matches_theorem(&self, name: Option<&str>) -> bool {
        name.is_some_and(|n| self.theorems.is_match(n))
    }

    /// Whether a statement's recorded origin falls under this set.
    pub fn matches_source(&self, source: &StatementSource) -> bool {
        self.matches_path(Path::new(&source.path), None) || self.matches_theorem(source.theorem.as_deref())
    }
}

/// Counts from one corpus build.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub files_found: usize,
    pub files_excluded: usize,
    pub files_skipped: Vec<(PathBuf, String)>,
    pub statements_seen: usize,
    pub statements_excluded: usize,
    pub duplicates: usize,
}

fn collect_tla_files(roots: &[PathBuf]) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut files = Vec::new();
    for root in roots {
        if !root.exists() {
            return Err(CorpusError::Io {
                path: root.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            });
        }
        for entry in walkdir::WalkDir::new(root).follow_links(true) {
            let entry = entry.map_err(|e| CorpusError::Io {
                path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.clone()),
                source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")),
            })?;
            let p = entry.path();
            if entry.file_type().is_file() && p.extension().is_some_and(|e| e == "tla") {
                files.push((p.to_path_buf(), root.clone()));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files.dedup_by(|a, b| a.0 == b.0);
    Ok(files)
}

fn display_path(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

/// Builds deduplicated records from every `.tla` file under `roots`.
pub fn build_corpus<T: Scalar>(roots: &[PathBuf], exclusions: &ExclusionSet) -> Result<Vec<CorpusRecord<T>>> {
    build_corpus_with_report(roots, exclusions).map(|(r, _)| r)
}

pub fn build_corpus_with_report<T: Scalar>(
    roots: &[PathBuf],
    exclusions: &ExclusionSet,
) -> Result<(Vec<CorpusRecord<T>>, BuildReport)> {
    let files = collect_tla_files(roots)?;
    if files.is_empty() {
        return Err(CorpusError::NoInputFiles(roots.to_vec()));
    }
    let mut report = BuildReport {
        files_found: files.len(),
        ..BuildReport::default()
    };

    enum Parsed {
        Excluded,
        Skipped(String),
        Statements(Vec<ProofStatement>),
    }

    let parsed: Vec<(PathBuf, Parsed)> = files
        .par_iter()
        .map(|(path, root)| {
            if exclusions.matches_path(path, Some(root)) {
                return (path.clone(), Parsed::Excluded);
            }
            let outcome = match fs::read_to_string(path) {
                Err(e) => Parsed::Skipped(e.to_string()),
                Ok(text) => match parse_module(&text) {
                    Err(e) => Parsed::Skipped(e.to_string()),
                    Ok(mut module) => {
                        module.source_path = Some(display_path(path));
                        Parsed::Statements(extract_statements(&module))
                    }
                },
            };
            (path.clone(), outcome)
        })
        .collect();

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (path, outcome) in parsed {
        match outcome {
            Parsed::Excluded => report.files_excluded += 1,
            Parsed::Skipped(reason) => {
                log::debug!("skipping {}: {reason}", path.display());
                report.files_skipped.push((path, reason));
            }
            Parsed::Statements(stmts) => {
                for s in stmts {
                    report.statements_seen += 1;
                    if exclusions.matches_theorem(s.source.theorem.as_deref()) {
                        report.statements_excluded += 1;
                        continue;
                    }
                    let rec = CorpusRecord::new(s);
                    if seen.insert(rec.id.clone()) {
                        records.push(rec);
                    } else {
                        report.duplicates += 1;
                    }
                }
            }
        }
    }
    Ok((records, report))
}

/// Fills in missing embeddings.
pub fn embed_records<T: Scalar>(records: &mut [CorpusRecord<T>], embedder: &dyn Embedder<T>) -> Result<()> {
    let missing: Vec<usize> = (0..records.len()).filter(|&i| records[i].embedding.is_none()).collect();
    if missing.is_empty() {
        return Ok(());
    }
    let texts: Vec<&str> = missing
        .iter()
        .map(|&i| records[i].statement.normalized_text.as_str())
        .collect();
    let vectors = embedder.embed_batch(&texts)?;
    for (i, v) in missing.into_iter().zip(vectors) {
        records[i].embedding = Some(v);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    records: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct RecordLine<T> {
    id: String,
    text: String,
    normalized_text: String,
    source_path: String,
    theorem: Option<String>,
    label: Option<StepLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<T>>,
}

pub fn write_corpus<T: Scalar, W: Write>(records: &[CorpusRecord<T>], writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    let header = Header {
        format: CORPUS_FORMAT.into(),
        records: records.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for r in records {
        let line = RecordLine {
            id: r.id.clone(),
            text: r.statement.text.clone(),
            normalized_text: r.statement.normalized_text.clone(),
            source_path: r.statement.source.path.clone(),
            theorem: r.statement.source.theorem.clone(),
            label: r.statement.label.clone(),
            embedding: r.embedding.as_ref().map(|e| e.values().to_vec()),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_corpus<T: Scalar, R: Read>(reader: R) -> Result<Vec<CorpusRecord<T>>> {
    let format_err = |line: usize, message: String| CorpusError::Format { line, message };
    let mut lines = BufReader::new(reader).lines();
    let header_line = match lines.next() {
        None => return Err(format_err(1, "missing header".into())),
        Some(l) => l.map_err(|e| format_err(1, e.to_string()))?,
    };
    let header: Header = serde_json::from_str(&header_line).map_err(|e| format_err(1, e.to_string()))?;
    if header.format != CORPUS_FORMAT {
        return Err(format_err(
            1,
            format!("unsupported format {:?}, expected {CORPUS_FORMAT:?}", header.format),
        ));
    }
    let mut records = Vec::with_capacity(header.records);
    let mut ids = HashSet::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| format_err(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordLine<T> = serde_json::from_str(&line).map_err(|e| format_err(n, e.to_string()))?;
        if r.id != record_id(&r.normalized_text) {
            return Err(format_err(n, format!("id {} does not match its normalized_text", r.id)));
        }
        if !ids.insert(r.id.clone()) {
            return Err(format_err(n, format!("duplicate id {}", r.id)));
        }
        records.push(CorpusRecord {
            id: r.id,
            statement: ProofStatement {
                text: r.text,
                label: r.label,
                source: StatementSource {
                    path: r.source_path,
                    theorem: r.theorem,
                },
                normalized_text: r.normalized_text,
            },
            embedding: r.embedding.map(Embedding::new),
        });
    }
    if records.len() != header.records {
        return Err(format_err(
            records.len() + 1,
            format!("header announces {} records, found {}", header.records, records.len()),
        ));
    }
    Ok(records)
}

pub fn save_corpus<T: Scalar>(records: &[CorpusRecord<T>], path: &Path) -> Result<()> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    write_corpus(records, file).map_err(io)
}

pub fn load_corpus<T: Scalar>(path: &Path) -> Result<Vec<CorpusRecord<T>>> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(file)
}
