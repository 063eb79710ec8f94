//! TOML configuration file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tlaprove_core::orchestrator::RunConfig;
use tlaprove_core::retrieval::DEFAULT_TRIGRAM_DIMENSION;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{what} {path} does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub corpus: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    /// `http`, `replay:<transcript>` or `script:<responses.json>`.
    pub llm: Option<String>,
    /// `mock:<verdicts.json>`, `tlapm` or `tlapm:<executable>`.
    pub verifier: Option<String>,
    pub log_level: Option<String>,
    pub embedder: EmbedderConfig,
    pub http: HttpSection,
    pub tlapm: TlapmSection,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderConfig {
    Trigram {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote {
        url: String,
        model: String,
        dimension: usize,
        #[serde(default)]
        batch_size: Option<usize>,
    },
}

fn default_dimension() -> usize {
    DEFAULT_TRIGRAM_DIMENSION
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::Trigram {
            dimension: DEFAULT_TRIGRAM_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSection {
    pub url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TlapmSection {
    pub executable: Option<PathBuf>,
    pub args: Option<Vec<String>>,
    pub timeout_secs: Option<u64>,
    pub max_concurrent: Option<usize>,
}

impl ToolConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        resolve(&mut cfg.corpus);
        resolve(&mut cfg.template_dir);
        for spec in [&mut cfg.llm, &mut cfg.verifier].into_iter().flatten() {
            if let Some((kind, rest)) = spec.split_once(':') {
                if !rest.is_empty() && Path::new(rest).is_relative() {
                    *spec = format!("{kind}:{}", base.join(rest).display());
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.run.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (what, path) in [("corpus", &self.corpus), ("template directory", &self.template_dir)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::MissingPath { what, path: p.clone() });
                }
            }
        }
        match &self.embedder {
            EmbedderConfig::Trigram { dimension: 0 } | EmbedderConfig::Remote { dimension: 0, .. } => {
                Err(ConfigError::Invalid("embedder dimension must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}
