//! Pipeline configuration, read from one TOML file.
//!
//! Relative paths are resolved against the config file's directory. Unknown
//! keys are rejected. API keys are never read from the file: an endpoint
//! names the environment variable that holds its key.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analytics::{AnalyticsSettings, CountMode, StdDevMode};
use crate::clustering::{HdbscanParams, ReducerMethod, ReducerParams};
use crate::corpus::{Period, SentenceRules, TokenizerSpec};
use crate::extraction::ExtractionSettings;
use crate::gateway::{Backend, MockBackend, OpenAiBackend, RetryPolicy, DEFAULT_PARALLELISM};
use crate::labeling::{LabelRequestSpec, LABEL_SYSTEM_PROMPT, MEMBERS_SLOT};
use crate::report::ReportOptions;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {var} (API key for the {role} endpoint) is not set")]
    MissingKey { role: String, var: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    #[serde(rename = "openai")]
    OpenAi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub kind: BackendKind,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

impl EndpointConfig {
    pub fn mock(model: &str) -> Self {
        Self {
            kind: BackendKind::Mock,
            model: model.into(),
            base_url: None,
            api_key_env: None,
            timeout_secs: default_timeout(),
        }
    }

    fn validate(&self, role: &str) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(format!("models.{role}: {m}")));
        if self.model.trim().is_empty() {
            return bad("model must not be empty".into());
        }
        if self.timeout_secs == 0 {
            return bad("timeout_secs must be positive".into());
        }
        if let Some(var) = &self.api_key_env {
            if var.is_empty() || !var.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return bad(format!("api_key_env {var:?} is not a variable name"));
            }
        }
        match (self.kind, &self.base_url) {
            (BackendKind::OpenAi, None) => bad("openai endpoints need base_url".into()),
            (BackendKind::OpenAi, Some(url)) if !(url.starts_with("http://") || url.starts_with("https://")) => {
                bad(format!("base_url {url:?} must start with http:// or https://"))
            }
            _ => Ok(()),
        }
    }

    /// Builds the backend. A missing key is an error unless `offline`, where
    /// only cached replies are served anyway.
    pub fn backend(&self, role: &str, offline: bool) -> Result<Arc<dyn Backend>, ConfigError> {
        match self.kind {
            BackendKind::Mock => Ok(Arc::new(MockBackend::default())),
            BackendKind::OpenAi => {
                let key = match &self.api_key_env {
                    None => None,
                    Some(var) => match std::env::var(var) {
                        Ok(v) => Some(v),
                        Err(_) if offline => None,
                        Err(_) => return Err(ConfigError::MissingKey { role: role.into(), var: var.clone() }),
                    },
                };
                let url = self.base_url.clone().unwrap_or_default();
                let backend =
                    OpenAiBackend::new(format!("openai:{role}"), url, key, Duration::from_secs(self.timeout_secs))
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Arc::new(backend))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    pub extraction: EndpointConfig,
    pub embedding: EndpointConfig,
    pub labeling: EndpointConfig,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            extraction: EndpointConfig::mock("mock-extractor"),
            embedding: EndpointConfig::mock("mock-embedder"),
            labeling: EndpointConfig::mock("mock-labeler"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentencesConfig {
    /// Characters that end a sentence in addition to '.'.
    pub extra_terminators: Vec<char>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub failure_threshold: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        let s = ExtractionSettings::new("");
        Self {
            temperature: s.temperature,
            max_output_tokens: s.max_output_tokens,
            failure_threshold: s.failure_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelingConfig {
    pub k_representatives: usize,
    pub max_label_words: usize,
    pub system_prompt: String,
    pub prompt_template: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        let s = LabelRequestSpec::default();
        Self {
            k_representatives: s.k_representatives,
            max_label_words: s.max_label_words,
            system_prompt: LABEL_SYSTEM_PROMPT.into(),
            prompt_template: MEMBERS_SLOT.into(),
            temperature: s.temperature,
            max_output_tokens: s.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryConfig {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        let r = RetryPolicy::default();
        Self { max_retries: r.max_retries, base_delay_ms: r.base_delay_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticsConfig {
    pub std_dev_mode: StdDevMode,
    pub count_mode: CountMode,
    /// Periods to compare; empty means every period in the corpus.
    pub periods: Vec<Period>,
    pub network_threshold: f64,
    pub top_k_unique: usize,
    pub top_k_figures: usize,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            std_dev_mode: StdDevMode::Population,
            count_mode: CountMode::Records,
            periods: Vec::new(),
            network_threshold: 0.0,
            top_k_unique: 3,
            top_k_figures: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Corpus manifest (TOML, one `[[novel]]` table per text).
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    /// Response cache; defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Stamp stage completion times into the manifest. Off by default so
    /// reruns are byte-identical.
    #[serde(default)]
    pub record_timestamps: bool,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    #[serde(default)]
    pub sentences: SentencesConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub labeling: LabelingConfig,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub reducer: ReducerParams,
    #[serde(default)]
    pub hdbscan: HdbscanParams,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg: PipelineConfig = toml::from_str(&raw)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        self.corpus = join(&self.corpus);
        self.output_dir = join(&self.output_dir);
        self.cache_dir = self.cache_dir.as_deref().map(join);
        self.reducer.external_path = self.reducer.external_path.as_deref().map(join);
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.parallelism == 0 {
            return invalid("parallelism must be at least 1".into());
        }
        self.tokenizer.validate().map_err(|e| ConfigError::Invalid(format!("tokenizer: {e}")))?;
        if self.sentences.extra_terminators.iter().any(|c| c.is_whitespace()) {
            return invalid("sentences.extra_terminators must not contain whitespace".into());
        }
        self.models.extraction.validate("extraction")?;
        self.models.embedding.validate("embedding")?;
        self.models.labeling.validate("labeling")?;
        let ex = &self.extraction;
        if !(0.0..=1.0).contains(&ex.failure_threshold) {
            return invalid(format!("extraction.failure_threshold must be in [0, 1], got {}", ex.failure_threshold));
        }
        if !(0.0..=2.0).contains(&ex.temperature) {
            return invalid(format!("extraction.temperature must be in [0, 2], got {}", ex.temperature));
        }
        if ex.max_output_tokens == 0 {
            return invalid("extraction.max_output_tokens must be positive".into());
        }
        self.label_spec().validate().map_err(|e| ConfigError::Invalid(format!("labeling: {e}")))?;
        self.reducer.validate().map_err(|e| ConfigError::Invalid(format!("reducer: {e}")))?;
        if self.reducer.method == ReducerMethod::External && self.reducer.external_path.is_none() {
            return invalid("reducer.external_path is required for the external method".into());
        }
        self.hdbscan.validate().map_err(|e| ConfigError::Invalid(format!("hdbscan: {e}")))?;
        let an = &self.analytics;
        if !(0.0..=1.0).contains(&an.network_threshold) {
            return invalid(format!("analytics.network_threshold must be in [0, 1], got {}", an.network_threshold));
        }
        if an.top_k_unique == 0 || an.top_k_figures == 0 {
            return invalid("analytics.top_k_unique and top_k_figures must be at least 1".into());
        }
        let mut periods = an.periods.clone();
        periods.sort();
        periods.dedup();
        if periods.len() != an.periods.len() {
            return invalid("analytics.periods lists a period twice".into());
        }
        Ok(())
    }

    pub fn sentence_rules(&self) -> SentenceRules {
        SentenceRules::with_extra_terminators(self.sentences.extra_terminators.iter().copied())
    }

    pub fn extraction_settings(&self) -> ExtractionSettings {
        ExtractionSettings {
            model: self.models.extraction.model.clone(),
            temperature: self.extraction.temperature,
            max_output_tokens: self.extraction.max_output_tokens,
            failure_threshold: self.extraction.failure_threshold,
        }
    }

    pub fn label_spec(&self) -> LabelRequestSpec {
        let l = &self.labeling;
        LabelRequestSpec {
            model: self.models.labeling.model.clone(),
            k_representatives: l.k_representatives,
            max_label_words: l.max_label_words,
            system_prompt: l.system_prompt.clone(),
            prompt_template: l.prompt_template.clone(),
            temperature: l.temperature,
            max_output_tokens: l.max_output_tokens,
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.retry.max_retries, base_delay_ms: self.retry.base_delay_ms }
    }

    pub fn analytics_settings(&self) -> AnalyticsSettings {
        AnalyticsSettings {
            std_dev_mode: self.analytics.std_dev_mode,
            count_mode: self.analytics.count_mode,
            periods: (!self.analytics.periods.is_empty()).then(|| self.analytics.periods.clone()),
        }
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            top_k_unique: self.analytics.top_k_unique,
            top_k_figures: self.analytics.top_k_figures,
            network_threshold: self.analytics.network_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<PipelineConfig, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.toml");
        std::fs::write(&path, text).unwrap();
        PipelineConfig::load(&path)
    }

    const MINIMAL: &str = "corpus = \"corpus.toml\"\noutput_dir = \"out\"\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = load(MINIMAL).unwrap();
        assert!(cfg.corpus.ends_with("corpus.toml") && cfg.corpus.is_absolute());
        assert_eq!(cfg.cache_dir(), cfg.output_dir.join("cache"));
        assert_eq!(cfg.tokenizer, TokenizerSpec::default());
        assert_eq!(cfg.hdbscan, HdbscanParams::default());
        assert_eq!(cfg.parallelism, DEFAULT_PARALLELISM);
        assert_eq!(cfg.label_spec().model, "mock-labeler");
        assert!(cfg.analytics_settings().periods.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for extra in [
            "colour = 1\n",
            "[hdbscan]\nmin_size = 3\n",
            "[models.extraction]\nkind = \"mock\"\nmodel = \"m\"\napi_key = \"sk\"\n",
        ] {
            let err = load(&format!("{MINIMAL}{extra}")).unwrap_err();
            assert!(matches!(err, ConfigError::Parse { .. }), "{extra}: {err}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for extra in [
            "parallelism = 0\n",
            "[tokenizer]\nname = \"bpe\"\n",
            "[hdbscan]\nmin_cluster_size = 1\n",
            "[analytics]\nnetwork_threshold = 1.5\n",
            "[analytics]\nperiods = [\"Imperial\", \"Imperial\"]\n",
            "[labeling]\nprompt_template = \"no slot\"\n",
            "[reducer]\nmethod = \"external\"\n",
            "[extraction]\nfailure_threshold = 2.0\n",
        ] {
            let err = load(&format!("{MINIMAL}{extra}")).unwrap_err();
            assert!(matches!(err, ConfigError::Invalid(_)), "{extra}: {err}");
        }
    }

    #[test]
    fn openai_endpoint_needs_url_and_named_key() {
        let models = "[models.extraction]\nkind = \"openai\"\nmodel = \"m\"\n\
                      [models.embedding]\nkind = \"mock\"\nmodel = \"e\"\n\
                      [models.labeling]\nkind = \"mock\"\nmodel = \"l\"\n";
        assert!(matches!(load(&format!("{MINIMAL}{models}")), Err(ConfigError::Invalid(_))));
        let with_url = models.replace(
            "model = \"m\"\n",
            "model = \"m\"\nbase_url = \"http://localhost:1\"\napi_key_env = \"MOTIFS_TEST_UNSET_KEY\"\n",
        );
        let cfg = load(&format!("{MINIMAL}{with_url}")).unwrap();
        let ep = &cfg.models.extraction;
        assert!(matches!(ep.backend("extraction", false), Err(ConfigError::MissingKey { .. })));
        assert!(ep.backend("extraction", true).unwrap().is_remote());
    }

    #[test]
    fn explicit_cache_dir_is_resolved() {
        let cfg = load(&format!("{MINIMAL}cache_dir = \"/tmp/motif-cache\"\n")).unwrap();
        assert_eq!(cfg.cache_dir(), PathBuf::from("/tmp/motif-cache"));
    }
}
