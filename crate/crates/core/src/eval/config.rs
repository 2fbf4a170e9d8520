//! Experiment configuration (TOML). Relative paths resolve against the config
//! file's directory; endpoint URLs can be overridden from the environment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{DEFAULT_ALPHA, DEFAULT_NEUTRAL_ZONE};
use crate::marketdata::DEFAULT_LABEL_WINDOW;
use crate::ppo::PpoConfig;
use crate::retrieval::{RetrievalConfig, ScorerKind};

pub const ENV_EMBED_URL: &str = "FINSENT_EMBED_URL";
pub const ENV_CLASSIFIER_URL: &str = "FINSENT_CLASSIFIER_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BaseNoContext,
    #[default]
    RagStatic,
    RagFeedbackCosine,
    RagFeedbackWoc,
    RagPpo,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaseNoContext,
        Variant::RagStatic,
        Variant::RagFeedbackCosine,
        Variant::RagFeedbackWoc,
        Variant::RagPpo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::BaseNoContext => "base_no_context",
            Variant::RagStatic => "rag_static",
            Variant::RagFeedbackCosine => "rag_feedback_cosine",
            Variant::RagFeedbackWoc => "rag_feedback_woc",
            Variant::RagPpo => "rag_ppo",
        }
    }

    pub fn is_feedback(self) -> bool {
        matches!(self, Variant::RagFeedbackCosine | Variant::RagFeedbackWoc)
    }

    /// Retrieval settings after the variant's fixed choices are applied.
    pub fn retrieval(self, base: &RetrievalConfig) -> RetrievalConfig {
        let mut r = base.clone();
        match self {
            Variant::BaseNoContext => {
                r.k = 0;
                r.price_context = false;
            }
            Variant::RagFeedbackCosine => r.scorer = ScorerKind::Cosine,
            Variant::RagFeedbackWoc => r.scorer = ScorerKind::Overlap,
            Variant::RagStatic | Variant::RagPpo => {}
        }
        r
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.as_str()).collect();
                Error::Config(format!(
                    "unknown variant {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialWeights {
    /// Weights as listed in the source registry file.
    #[default]
    Registry,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub prices: PathBuf,
    pub corpus: PathBuf,
    /// Headlines to classify; labeled from `prices` at run time.
    pub queries: PathBuf,
    pub sources: PathBuf,
    #[serde(default)]
    pub initial_weights: InitialWeights,
    /// Policy checkpoint, required by `rag_ppo`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub window: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_LABEL_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    #[default]
    Hash,
    Precomputed,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub max_ngram: usize,
    /// JSONL `{id, vector}` file for `precomputed`.
    pub path: Option<PathBuf>,
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Hash,
            dim: crate::embedding::DEFAULT_DIM,
            max_ngram: 2,
            path: None,
            url: String::new(),
            timeout_ms: 10_000,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Oracle,
    Rule,
    Remote,
}

/// Oracle fidelities, inline or as a path to a `name = p` TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FidelitySpec {
    Path(PathBuf),
    Inline(IndexMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub fidelity: Option<FidelitySpec>,
    pub base_rate: f64,
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Oracle,
            fidelity: None,
            base_rate: 1.0 / 3.0,
            url: String::new(),
            timeout_ms: 30_000,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub alpha: f64,
    pub neutral_zone: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            neutral_zone: DEFAULT_NEUTRAL_ZONE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoEvalConfig {
    /// States sampled (from a frozen-policy rollout) to extract weights.
    pub extract_states: usize,
}

impl Default for PpoEvalConfig {
    fn default() -> Self {
        Self {
            extract_states: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for static-weight evaluation; 0 picks automatically.
    #[serde(default)]
    pub threads: usize,
    pub data: DataConfig,
    #[serde(default)]
    pub labels: LabelConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub feedback: FeedbackConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub ppo_eval: PpoEvalConfig,
    /// Directory the relative paths above are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    /// Reads, applies environment overrides, validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::parse(&text, base)?;
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(url) = lookup(ENV_EMBED_URL).filter(|u| !u.is_empty()) {
            self.embedding.url = url;
        }
        if let Some(url) = lookup(ENV_CLASSIFIER_URL).filter(|u| !u.is_empty()) {
            self.classifier.url = url;
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.labels.window < 2 {
            return bad(format!(
                "labels.window must be >= 2, got {}",
                self.labels.window
            ));
        }
        let r = &self.retrieval;
        if r.window_days == 0 || r.window_days.is_multiple_of(2) {
            return bad(format!(
                "retrieval.window_days must be odd, got {}",
                r.window_days
            ));
        }
        if self.variant != Variant::BaseNoContext && r.k == 0 {
            return bad(format!("variant {} needs retrieval.k >= 1", self.variant));
        }
        if self.variant.is_feedback() {
            let f = &self.feedback;
            if !(f.alpha >= 0.0 && f.alpha.is_finite()) {
                return bad(format!("feedback.alpha must be >= 0, got {}", f.alpha));
            }
            if !(f.neutral_zone >= 0.0 && f.neutral_zone.is_finite()) {
                return bad(format!(
                    "feedback.neutral_zone must be >= 0, got {}",
                    f.neutral_zone
                ));
            }
        }
        if self.variant == Variant::RagPpo {
            if self.data.checkpoint.is_none() {
                return bad("variant rag_ppo needs data.checkpoint".into());
            }
            if self.ppo_eval.extract_states == 0 {
                return bad("ppo_eval.extract_states must be positive".into());
            }
        }
        match self.embedding.kind {
            EmbeddingKind::Precomputed if self.embedding.path.is_none() => {
                return bad("embedding.kind = precomputed needs embedding.path".into());
            }
            EmbeddingKind::Remote if self.embedding.url.is_empty() => {
                return bad(format!(
                    "embedding.kind = remote needs embedding.url or {ENV_EMBED_URL}"
                ));
            }
            _ => {}
        }
        match self.classifier.kind {
            ClassifierKind::Oracle if self.classifier.fidelity.is_none() => {
                return bad("classifier.kind = oracle needs classifier.fidelity".into());
            }
            ClassifierKind::Remote if self.classifier.url.is_empty() => {
                return bad(format!(
                    "classifier.kind = remote needs classifier.url or {ENV_CLASSIFIER_URL}"
                ));
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.classifier.base_rate) {
            return bad(format!(
                "classifier.base_rate outside [0,1]: {}",
                self.classifier.base_rate
            ));
        }
        self.ppo.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        prices = "prices.csv"
        corpus = "corpus.jsonl"
        queries = "queries.jsonl"
        sources = "sources.toml"

        [classifier]
        fidelity = "fidelity.toml"
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::parse(MINIMAL, "/tmp/x").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.variant, Variant::RagStatic);
        assert_eq!(cfg.retrieval.k, 3);
        assert_eq!(cfg.feedback.alpha, 1e-4);
        assert_eq!(cfg.feedback.neutral_zone, 0.005);
        assert_eq!(cfg.labels.window, 30);
        assert_eq!(cfg.ppo.gamma, 0.99);
        assert_eq!(
            cfg.resolve(Path::new("prices.csv")),
            Path::new("/tmp/x/prices.csv")
        );
        assert_eq!(
            cfg.classifier.fidelity,
            Some(FidelitySpec::Path("fidelity.toml".into()))
        );
    }

    #[test]
    fn env_overrides_urls() {
        let mut cfg = ExperimentConfig::parse(MINIMAL, "").unwrap();
        cfg.classifier.url = "http://config".into();
        cfg.apply_env(|k| (k == ENV_CLASSIFIER_URL).then(|| "http://env".to_string()));
        assert_eq!(cfg.classifier.url, "http://env");
        assert_eq!(cfg.embedding.url, "");
    }

    #[test]
    fn variant_requirements() {
        let mut cfg = ExperimentConfig::parse(MINIMAL, "").unwrap();
        cfg.variant = Variant::RagPpo;
        assert!(cfg.validate().is_err());
        cfg.variant = Variant::RagFeedbackCosine;
        cfg.feedback.alpha = -1.0;
        assert!(cfg.validate().is_err());
        cfg.feedback.alpha = 0.0;
        cfg.validate().unwrap();
        assert!(ExperimentConfig::parse("variant = 3", "").is_err());
        assert_eq!("rag_ppo".parse::<Variant>().unwrap(), Variant::RagPpo);
        assert!("rag".parse::<Variant>().is_err());
    }

    #[test]
    fn inline_fidelity_table() {
        let text = MINIMAL.replace(
            "fidelity = \"fidelity.toml\"",
            "fidelity = { A = 0.9, B = 0.3 }",
        );
        let cfg = ExperimentConfig::parse(&text, "").unwrap();
        match cfg.classifier.fidelity {
            Some(FidelitySpec::Inline(m)) => assert_eq!(m.get("B"), Some(&0.3)),
            other => panic!("{other:?}"),
        }
    }
}
