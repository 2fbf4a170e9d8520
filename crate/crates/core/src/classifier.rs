//! Sentiment classifier port: a cue-counting stub, a seeded oracle for
//! synthetic worlds, and a client for a remote completion endpoint.

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::tokenize;
use crate::error::{Error, Result};
use crate::marketdata::SentimentLabel;
use crate::retrieval::{query_sentence, ContextBundle, Polarity, SentimentCueLexicon};
use crate::seed::keyed_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: SentimentLabel,
    pub raw_output: String,
}

/// First of `positive` / `negative` / `neutral` appearing as a word, any case.
pub fn parse_label(raw: &str) -> Result<SentimentLabel> {
    tokenize(raw)
        .iter()
        .find_map(|t| match t.as_str() {
            "positive" => Some(SentimentLabel::Positive),
            "negative" => Some(SentimentLabel::Negative),
            "neutral" => Some(SentimentLabel::Neutral),
            _ => None,
        })
        .ok_or_else(|| Error::LabelParse(raw.chars().take(200).collect()))
}

pub trait Classifier: Send + Sync {
    fn classify(&self, prompt: &str) -> Result<Prediction>;
}

/// Counts polarity cues in the query sentence only; ties and silence are neutral.
#[derive(Debug, Clone, Default)]
pub struct RuleClassifier {
    lexicon: SentimentCueLexicon,
}

impl RuleClassifier {
    pub fn new(lexicon: SentimentCueLexicon) -> Self {
        Self { lexicon }
    }
}

impl Classifier for RuleClassifier {
    fn classify(&self, prompt: &str) -> Result<Prediction> {
        if prompt.trim().is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        let sentence = query_sentence(prompt).unwrap_or(prompt);
        let pos = self.lexicon.count(sentence, Polarity::Positive);
        let neg = self.lexicon.count(sentence, Polarity::Negative);
        let label = match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => SentimentLabel::Positive,
            std::cmp::Ordering::Less => SentimentLabel::Negative,
            std::cmp::Ordering::Equal => SentimentLabel::Neutral,
        };
        Ok(Prediction {
            label,
            raw_output: label.as_str().to_string(),
        })
    }
}

/// Per-source probability that the oracle answers correctly when that source
/// supplies the top-ranked context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, f64>", into = "IndexMap<String, f64>")]
pub struct OracleFidelity {
    per_source: IndexMap<String, f64>,
}

impl OracleFidelity {
    pub fn new(pairs: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let per_source: IndexMap<String, f64> = pairs.into_iter().collect();
        if let Some((s, p)) = per_source.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!(
                "fidelity for {s:?} outside [0,1]: {p}"
            )));
        }
        Ok(Self { per_source })
    }

    pub fn get(&self, source: &str) -> Option<f64> {
        self.per_source.get(source).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.per_source.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl TryFrom<IndexMap<String, f64>> for OracleFidelity {
    type Error = Error;
    fn try_from(m: IndexMap<String, f64>) -> Result<Self> {
        Self::new(m)
    }
}

impl From<OracleFidelity> for IndexMap<String, f64> {
    fn from(f: OracleFidelity) -> Self {
        f.per_source
    }
}

/// Returns the truth with probability `p(top source)`, otherwise a uniformly
/// chosen wrong label. Draws come from a stream keyed by `(seed, query id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleClassifier {
    pub fidelity: OracleFidelity,
    pub seed: u64,
    /// Correctness probability with no context, or for sources missing from `fidelity`.
    pub base_rate: f64,
}

impl OracleClassifier {
    pub fn new(fidelity: OracleFidelity, seed: u64, base_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&base_rate) {
            return Err(Error::Config(format!(
                "base rate outside [0,1]: {base_rate}"
            )));
        }
        Ok(Self {
            fidelity,
            seed,
            base_rate,
        })
    }

    pub fn oracle_classify(
        &self,
        bundle: &ContextBundle,
        truth: SentimentLabel,
    ) -> Result<Prediction> {
        let Some(truth_idx) = truth.class_index() else {
            return Err(Error::InvalidInput(
                "oracle needs a known truth label".into(),
            ));
        };
        let p = bundle
            .top_source()
            .and_then(|s| self.fidelity.get(s))
            .unwrap_or(self.base_rate);
        let mut rng = keyed_rng(self.seed, &bundle.query.id);
        let u: f64 = rng.random();
        let label = if u < p {
            truth
        } else {
            let offset = rng.random_range(1..SentimentLabel::CLASSES.len());
            SentimentLabel::CLASSES[(truth_idx + offset) % SentimentLabel::CLASSES.len()]
        };
        Ok(Prediction {
            label,
            raw_output: label.as_str().to_string(),
        })
    }
}

#[cfg(feature = "remote")]
pub use remote_classifier::RemoteClassifier;

#[cfg(feature = "remote")]
mod remote_classifier {
    use super::*;
    use crate::remote::{JsonClient, RemoteConfig};

    #[derive(Serialize)]
    struct CompletionRequest<'a> {
        prompt: &'a str,
    }

    #[derive(Deserialize)]
    struct CompletionResponse {
        text: String,
    }

    /// Completion-style endpoint: `{prompt}` in, `{text}` out.
    #[derive(Debug)]
    pub struct RemoteClassifier {
        client: JsonClient,
    }

    impl RemoteClassifier {
        pub fn new(config: RemoteConfig) -> Result<Self> {
            Ok(Self {
                client: JsonClient::new(config)?,
            })
        }
    }

    impl Classifier for RemoteClassifier {
        fn classify(&self, prompt: &str) -> Result<Prediction> {
            if prompt.trim().is_empty() {
                return Err(Error::InvalidInput("empty prompt".into()));
            }
            let resp: CompletionResponse = self.client.post(&CompletionRequest { prompt })?;
            let label = parse_label(&resp.text)?;
            Ok(Prediction {
                label,
                raw_output: resp.text,
            })
        }
    }
}

/// The classifier a pipeline runs with.
pub enum Backend {
    Prompt(Box<dyn Classifier>),
    Oracle(OracleClassifier),
}

impl Backend {
    pub fn rule() -> Self {
        Backend::Prompt(Box::new(RuleClassifier::default()))
    }

    /// `truth` is consulted only by the oracle.
    pub fn predict(&self, bundle: &ContextBundle, truth: SentimentLabel) -> Result<Prediction> {
        match self {
            Backend::Prompt(c) => c.classify(&bundle.rendered_prompt),
            Backend::Oracle(o) => o.oracle_classify(bundle, truth),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NewsItem;
    use crate::retrieval::RetrievalCandidate;
    use chrono::NaiveDate;

    fn query(id: &str, headline: &str) -> NewsItem {
        NewsItem {
            id: id.into(),
            headline: headline.into(),
            source: "Q".into(),
            symbol: "TCS".into(),
            date: NaiveDate::from_ymd_opt(2024, 1, 2).unwrap(),
        }
    }

    fn bundle_with_top(id: &str, source: &str) -> ContextBundle {
        let q = query(id, "TCS results today");
        let c = RetrievalCandidate {
            item: NewsItem {
                id: format!("{id}-c"),
                source: source.into(),
                ..q.clone()
            },
            similarity: 1.0,
            weighted_score: 1.0,
        };
        ContextBundle::new(q, vec![c], None)
    }

    #[test]
    fn parse_label_examples() {
        assert_eq!(
            parse_label("Sentiment: Positive.").unwrap(),
            SentimentLabel::Positive
        );
        assert_eq!(parse_label("NEUTRAL").unwrap(), SentimentLabel::Neutral);
        assert_eq!(
            parse_label("negative, not positive").unwrap(),
            SentimentLabel::Negative
        );
        assert!(matches!(
            parse_label("I cannot determine"),
            Err(Error::LabelParse(_))
        ));
        assert!(parse_label("positively").is_err());
    }

    #[test]
    fn rule_stub_reads_query_only() {
        let rule = RuleClassifier::default();
        let b = ContextBundle::new(query("q", "TCS shares gain on big deal"), vec![], None);
        assert_eq!(
            rule.classify(&b.rendered_prompt).unwrap().label,
            SentimentLabel::Positive
        );
        let b = ContextBundle::new(query("q", "TCS board meets"), vec![], None);
        assert_eq!(
            rule.classify(&b.rendered_prompt).unwrap().label,
            SentimentLabel::Neutral
        );
        let b = ContextBundle::new(query("q", "Profit falls, shares drop"), vec![], None);
        assert_eq!(
            rule.classify(&b.rendered_prompt).unwrap().label,
            SentimentLabel::Negative
        );
        assert!(rule.classify("  ").is_err());
    }

    #[test]
    fn oracle_degenerate_probabilities() {
        let fid = OracleFidelity::new([("good".into(), 1.0), ("bad".into(), 0.0)]).unwrap();
        let o = OracleClassifier::new(fid, 7, 0.5).unwrap();
        for i in 0..200 {
            let truth = SentimentLabel::CLASSES[i % 3];
            let good = o
                .oracle_classify(&bundle_with_top(&format!("g{i}"), "good"), truth)
                .unwrap();
            assert_eq!(good.label, truth);
            let bad = o
                .oracle_classify(&bundle_with_top(&format!("b{i}"), "bad"), truth)
                .unwrap();
            assert_ne!(bad.label, truth);
            assert!(bad.label.is_known());
        }
        assert!(o
            .oracle_classify(&bundle_with_top("x", "good"), SentimentLabel::Unknown)
            .is_err());
        assert!(OracleFidelity::new([("x".into(), 1.5)]).is_err());
    }

    #[test]
    fn oracle_monte_carlo_accuracy() {
        let fid = OracleFidelity::new([("s".into(), 0.7)]).unwrap();
        let o = OracleClassifier::new(fid, 12345, 0.5).unwrap();
        let hits = (0..10_000)
            .filter(|i| {
                let b = bundle_with_top(&format!("q{i}"), "s");
                o.oracle_classify(&b, SentimentLabel::Positive)
                    .unwrap()
                    .label
                    == SentimentLabel::Positive
            })
            .count();
        let acc = hits as f64 / 10_000.0;
        assert!((acc - 0.70).abs() <= 0.02, "{acc}");
    }

    #[test]
    fn oracle_is_order_independent_and_uses_base_rate() {
        let fid = OracleFidelity::new([("s".into(), 0.5)]).unwrap();
        let o = OracleClassifier::new(fid, 3, 1.0).unwrap();
        let b = bundle_with_top("same", "s");
        let first = o.oracle_classify(&b, SentimentLabel::Negative).unwrap();
        for _ in 0..5 {
            assert_eq!(
                o.oracle_classify(&b, SentimentLabel::Negative).unwrap(),
                first
            );
        }
        let empty = ContextBundle::new(query("e", "x"), vec![], None);
        assert_eq!(
            o.oracle_classify(&empty, SentimentLabel::Neutral)
                .unwrap()
                .label,
            SentimentLabel::Neutral
        );
    }
}
