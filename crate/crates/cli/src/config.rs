//! Pipeline configuration, read from TOML. Every key is optional; relative
//! paths resolve against the config file's directory.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! personas = "personas"      # directory of *.json graphs or *.txt markup narratives
//! out_dir = "out"
//! rules = "rules.json"       # optional genericization overrides
//! items = "items.json"       # evaluation inputs, optional
//! bank_d = "d.csv"
//! bank_l = "l.csv"
//! bank_f = "f.csv"
//!
//! [unify]
//! method = "exact"           # or "embed"
//! tau = 0.85
//! epsilon = inf              # inf disables the DP set union
//! delta = 1e-6
//! max_contribution = 10
//!
//! [sample]
//! count = 30
//! anchor = "auto"            # or a unigraph node id
//! lambda = 1.0
//! alpha = 0.15
//! node_budget = 40
//! time_jitter = 0
//!
//! [msc]
//! threshold = 0.5
//!
//! [evaluate]
//! skip = false
//! raw_emd = false
//!
//! [codec]
//! kind = "mock"              # or "remote"; endpoint and key come from the environment
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use synonymix_core::sampler::{DEFAULT_ALPHA, DEFAULT_BUDGET, DEFAULT_MSC_THRESHOLD};
use synonymix_explorer::ExplorerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub unify: UnifyConfig,
    pub sample: SampleConfig,
    pub msc: MscConfig,
    pub evaluate: EvaluateConfig,
    pub codec: CodecConfig,
    pub explorer: ExplorerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            unify: UnifyConfig::default(),
            sample: SampleConfig::default(),
            msc: MscConfig::default(),
            evaluate: EvaluateConfig::default(),
            codec: CodecConfig::default(),
            explorer: ExplorerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub personas: PathBuf,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank_d: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank_l: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank_f: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            personas: PathBuf::from("personas"),
            out_dir: PathBuf::from("out"),
            rules: None,
            items: None,
            bank_d: None,
            bank_l: None,
            bank_f: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMethod {
    Exact,
    #[serde(rename = "embed", alias = "embedding")]
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnifyConfig {
    pub method: MergeMethod,
    pub tau: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub max_contribution: usize,
}

impl Default for UnifyConfig {
    fn default() -> Self {
        UnifyConfig { method: MergeMethod::Exact, tau: 0.85, epsilon: f64::INFINITY, delta: 1e-6, max_contribution: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
    /// `"auto"` draws an anchor per synthetic persona.
    pub anchor: String,
    pub lambda: f64,
    pub alpha: f64,
    pub node_budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub time_jitter: u32,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            count: 30,
            anchor: "auto".into(),
            lambda: 1.0,
            alpha: DEFAULT_ALPHA,
            node_budget: DEFAULT_BUDGET,
            max_steps: None,
            time_jitter: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MscConfig {
    pub threshold: f64,
}

impl Default for MscConfig {
    fn default() -> Self {
        MscConfig { threshold: DEFAULT_MSC_THRESHOLD }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub skip: bool,
    pub raw_emd: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub kind: CodecKind,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig { kind: CodecKind::Mock, model: "default".into(), timeout_secs: 30, max_retries: 2 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let mut config = PipelineConfig::from_toml(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        if let Some(base) = path.parent() {
            config.paths.resolve(base);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.personas);
        join(&mut self.out_dir);
        for p in [&mut self.rules, &mut self.items, &mut self.bank_d, &mut self.bank_l, &mut self.bank_f].into_iter().flatten() {
            join(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn parses_partial_sections() {
        let c = PipelineConfig::from_toml(
            "seed = 9\n[unify]\nepsilon = 1.0\nmethod = \"embed\"\n[sample]\nanchor = \"I-abc\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.unify.epsilon, 1.0);
        assert_eq!(c.unify.method, MergeMethod::Embedding);
        assert_eq!(c.unify.delta, 1e-6);
        assert_eq!(c.sample.anchor, "I-abc");
        assert_eq!(c.sample.count, 30);
    }

    #[test]
    fn infinity_round_trips() {
        let c = PipelineConfig::default();
        let text = c.to_toml();
        assert!(text.contains("epsilon = inf"), "{text}");
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml("[unify]\nepsilonn = 1.0\n").is_err());
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[paths]\npersonas = \"in\"\nitems = \"/abs/items.json\"\n").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.paths.personas, dir.path().join("in"));
        assert_eq!(c.paths.items, Some(PathBuf::from("/abs/items.json")));
    }
}
