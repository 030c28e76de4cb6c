//! Run configuration, read from a TOML file.
//!
//! ```toml
//! kb = "fixtures/mini_kb.tsv"
//! schema = "fixtures/schema.tsv"
//! pool = "fixtures/prototypes.tsv"
//! generator = "pretexeval"        # pretexeval | direct | llmeval
//! keys = ["None", "Inv"]          # optional, pretexeval only; default all 8
//! rephrase = false
//! output_dir = "out"
//!
//! [seeds]
//! subset = 1
//!
//! [model]
//! mock = "perfect"                # or an [model.endpoint] table
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::EndpointConfig;
use crate::digest_hex;
use crate::harness::DEFAULT_SHOTS;
use crate::predicate::TransformKey;
use crate::textgen::Generator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub subset: u64,
    pub negatives: u64,
    pub demos: u64,
    pub mock: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            subset: 13,
            negatives: 17,
            demos: 19,
            mock: 23,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Built-in mock: `perfect`, `always-true`, `coin` or `surface`.
    pub mock: Option<String>,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kb: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub pool: Option<PathBuf>,
    #[serde(default = "default_generator")]
    pub generator: Generator,
    /// Transformation keys to render; all eight when absent.
    #[serde(default)]
    pub keys: Option<Vec<TransformKey>>,
    #[serde(default)]
    pub rephrase: bool,
    /// Paraphrasing endpoint; also generates statements for `llmeval`.
    #[serde(default)]
    pub rephraser: Option<EndpointConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_shots")]
    pub shots: usize,
    /// Knowledge points per relation held out for demonstrations.
    #[serde(default = "default_shots")]
    pub demos_per_relation: usize,
    #[serde(default)]
    pub pad_llmeval: bool,
    /// Emit the cumulative transformation ablation alongside the main report.
    #[serde(default)]
    pub ablation_sweep: bool,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,

    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_generator() -> Generator {
    Generator::PretexEval
}

fn default_parallelism() -> usize {
    4
}

fn default_shots() -> usize {
    DEFAULT_SHOTS
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if let Some(keys) = &self.keys {
            if keys.is_empty() {
                return invalid("`keys` must not be empty");
            }
            if self.generator != Generator::PretexEval {
                return invalid("`keys` only applies to the pretexeval generator");
            }
            let mut sorted = keys.clone();
            sorted.sort_by_key(|k| k.index());
            sorted.dedup();
            if sorted.len() != keys.len() {
                return invalid("`keys` contains duplicates");
            }
        }
        if self.generator != Generator::LlmEval && self.pool.is_none() {
            return invalid("`pool` is required for the pretexeval and direct generators");
        }
        if self.rephrase && self.rephraser.is_none() {
            return invalid("`rephrase = true` needs a [rephraser] endpoint");
        }
        if self.generator == Generator::LlmEval && self.rephraser.is_none() {
            return invalid("the llmeval generator needs a [rephraser] endpoint");
        }
        match (&self.model.mock, &self.model.endpoint) {
            (Some(_), Some(_)) => return invalid("[model] takes either `mock` or `endpoint`, not both"),
            (None, None) => return invalid("[model] needs `mock` or `endpoint`"),
            _ => {}
        }
        if self.ablation_sweep && (self.generator != Generator::PretexEval || self.keys.is_some()) {
            return invalid("`ablation_sweep` needs the pretexeval generator with all keys");
        }
        if self.shots > 0 && self.demos_per_relation < self.shots {
            return invalid("`demos_per_relation` must be at least `shots`");
        }
        if self.parallelism == 0 {
            return invalid("`parallelism` must be positive");
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn kb_path(&self) -> PathBuf {
        self.resolve(&self.kb)
    }

    pub fn schema_path(&self) -> PathBuf {
        self.resolve(&self.schema)
    }

    pub fn pool_path(&self) -> Option<PathBuf> {
        self.pool.as_deref().map(|p| self.resolve(p))
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn cache_path(&self) -> PathBuf {
        match &self.cache_dir {
            Some(p) => self.resolve(p),
            None => self.output_path().join("cache"),
        }
    }

    /// Keys rendered by this run, in canonical order.
    pub fn active_keys(&self) -> Vec<TransformKey> {
        match (self.generator, &self.keys) {
            (Generator::PretexEval, Some(keys)) => {
                let mut k = keys.clone();
                k.sort_by_key(|k| k.index());
                k
            }
            (Generator::PretexEval, None) => TransformKey::ALL.to_vec(),
            _ => vec![TransformKey::NONE],
        }
    }

    /// Hash of the config as written (paths unresolved), so it is stable
    /// across checkouts.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        digest_hex(&canonical)[..16].to_string()
    }
}
