//! Retrieval-augmented context: cue filtering, source-weighted scoring, top-k
//! selection, price narrative, and instruction-prompt rendering.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStore, NewsItem};
use crate::embedding::{cosine, overlap_coefficient, token_set, tokenize, Doc, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::marketdata::{PriceBar, PriceStore};
use crate::weights::SourceWeights;

pub const INSTRUCTION: &str = "Classify the sentiment of the following financial sentence:";
pub const PROMPT_OPEN: &str = "<s>[INST] ";
pub const PROMPT_CLOSE: &str = " [/INST]";
/// Bumped whenever the narrative wording changes.
pub const NARRATIVE_TEMPLATE_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 3;
pub const DEFAULT_WINDOW_DAYS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentCueLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
    neutral: BTreeSet<String>,
}

const POSITIVE_CUES: &[&str] = &[
    "gain", "gains", "rise", "rises", "surge", "surges", "jump", "jumps", "rally", "rallies",
    "soar", "soars", "profit", "beat", "beats", "upgrade", "record", "strong", "growth", "higher",
];
const NEGATIVE_CUES: &[&str] = &[
    "fall",
    "falls",
    "drop",
    "drops",
    "decline",
    "declines",
    "slump",
    "slumps",
    "plunge",
    "plunges",
    "loss",
    "losses",
    "weak",
    "miss",
    "misses",
    "downgrade",
    "lower",
    "crash",
];
const NEUTRAL_CUES: &[&str] = &["stable", "flat", "unchanged", "steady", "muted", "sideways"];

impl Default for SentimentCueLexicon {
    fn default() -> Self {
        Self::new(POSITIVE_CUES, NEGATIVE_CUES, NEUTRAL_CUES)
            .expect("default cue sets are disjoint")
    }
}

impl SentimentCueLexicon {
    pub fn new<S: AsRef<str>>(positive: &[S], negative: &[S], neutral: &[S]) -> Result<Self> {
        let norm = |terms: &[S]| -> BTreeSet<String> {
            terms
                .iter()
                .map(|t| t.as_ref().trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect()
        };
        let (positive, negative, neutral) = (norm(positive), norm(negative), norm(neutral));
        let overlap = positive
            .intersection(&negative)
            .chain(positive.intersection(&neutral))
            .chain(negative.intersection(&neutral))
            .next();
        if let Some(term) = overlap {
            return Err(Error::Config(format!(
                "cue {term:?} appears in more than one polarity"
            )));
        }
        Ok(Self {
            positive,
            negative,
            neutral,
        })
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len() + self.neutral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Polarities whose cues occur in `text` as whole tokens.
    pub fn cues(&self, text: &str) -> BTreeSet<Polarity> {
        let mut found = BTreeSet::new();
        for token in tokenize(text) {
            if self.positive.contains(&token) {
                found.insert(Polarity::Positive);
            } else if self.negative.contains(&token) {
                found.insert(Polarity::Negative);
            } else if self.neutral.contains(&token) {
                found.insert(Polarity::Neutral);
            }
        }
        found
    }

    /// The single polarity of `text`, or `None` when it has no cues or mixed cues.
    pub fn dominant(&self, text: &str) -> Option<Polarity> {
        let cues = self.cues(text);
        match cues.len() {
            1 => cues.into_iter().next(),
            _ => None,
        }
    }

    pub fn count(&self, text: &str, polarity: Polarity) -> usize {
        let set = match polarity {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
            Polarity::Neutral => &self.neutral,
        };
        tokenize(text).iter().filter(|t| set.contains(*t)).count()
    }
}

/// Drops candidates whose cues conflict with a single-polarity query.
/// Cue-free candidates always pass; a cue-free or mixed query passes everything.
pub fn cue_filter<'a>(
    candidates: Vec<&'a NewsItem>,
    query: &NewsItem,
    lexicon: &SentimentCueLexicon,
) -> Vec<&'a NewsItem> {
    let Some(polarity) = lexicon.dominant(&query.headline) else {
        return candidates;
    };
    candidates
        .into_iter()
        .filter(|c| {
            let cues = lexicon.cues(&c.headline);
            cues.is_empty() || cues.contains(&polarity)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Cosine,
    Overlap,
}

/// A relevance scorer bound to its resources.
#[derive(Clone, Copy)]
pub enum Scorer<'a> {
    Cosine(&'a dyn EmbeddingProvider),
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCandidate {
    pub item: NewsItem,
    pub similarity: f64,
    pub weighted_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub selected: Vec<RetrievalCandidate>,
    pub excluded: Vec<Exclusion>,
}

/// Ranking order: weighted score descending, then newer first, then id ascending.
pub fn rank_order(a: &RetrievalCandidate, b: &RetrievalCandidate) -> Ordering {
    b.weighted_score
        .total_cmp(&a.weighted_score)
        .then_with(|| b.item.date.cmp(&a.item.date))
        .then_with(|| a.item.id.cmp(&b.item.id))
}

/// Scores every candidate, weights by source, and keeps the top `k`.
/// Candidates the scorer cannot handle are excluded and reported.
pub fn score_and_select(
    filtered: &[&NewsItem],
    query: &NewsItem,
    weights: &SourceWeights,
    scorer: Scorer<'_>,
    k: usize,
) -> Result<Selection> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let mut selection = Selection::default();
    let mut scored = Vec::with_capacity(filtered.len());
    match scorer {
        Scorer::Cosine(provider) => {
            let q = provider.embed(Doc::new(&query.id, &query.headline))?;
            let docs: Vec<Doc<'_>> = filtered
                .iter()
                .map(|c| Doc::new(&c.id, &c.headline))
                .collect();
            for (item, emb) in filtered.iter().zip(provider.embed_batch(&docs)) {
                match emb.and_then(|v| cosine(&q, &v)) {
                    Ok(sim) => scored.push(weighted(item, sim, weights)),
                    Err(e) => selection.excluded.push(Exclusion {
                        id: item.id.clone(),
                        reason: e.to_string(),
                    }),
                }
            }
        }
        Scorer::Overlap => {
            let q = token_set(&query.headline);
            for item in filtered {
                match overlap_coefficient(&q, &token_set(&item.headline)) {
                    Ok(sim) => scored.push(weighted(item, sim, weights)),
                    Err(e) => selection.excluded.push(Exclusion {
                        id: item.id.clone(),
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    scored.sort_by(rank_order);
    scored.truncate(k);
    selection.selected = scored;
    Ok(selection)
}

fn weighted(item: &NewsItem, similarity: f64, weights: &SourceWeights) -> RetrievalCandidate {
    RetrievalCandidate {
        item: item.clone(),
        similarity,
        weighted_score: similarity * weights.get(&item.source),
    }
}

/// One sentence describing up to three preceding opens and their day-over-day changes.
pub fn price_narrative(bars: &[PriceBar]) -> String {
    let Some(first) = bars.first() else {
        return String::new();
    };
    let days = if bars.len() == 1 { "day" } else { "days" };
    let mut parts = vec![format!("{:.2}", first.open)];
    for pair in bars.windows(2) {
        let change = (pair[1].open - pair[0].open) / pair[0].open * 100.0;
        parts.push(format!("{:.2} ({:+.2}%)", pair[1].open, change));
    }
    format!(
        "Over the last {} trading {days}, {} opened at {}.",
        bars.len(),
        first.symbol,
        parts.join(", ")
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub query: NewsItem,
    pub selected: Vec<RetrievalCandidate>,
    pub price_narrative: Option<String>,
    pub rendered_prompt: String,
}

impl ContextBundle {
    pub fn new(
        query: NewsItem,
        selected: Vec<RetrievalCandidate>,
        price_narrative: Option<String>,
    ) -> Self {
        let price_narrative = price_narrative.filter(|n| !n.is_empty());
        let mut bundle = Self {
            query,
            selected,
            price_narrative,
            rendered_prompt: String::new(),
        };
        bundle.rendered_prompt = render_prompt(&bundle);
        bundle
    }

    /// Source of the top-ranked context item, if any.
    pub fn top_source(&self) -> Option<&str> {
        self.selected.first().map(|c| c.item.source.as_str())
    }

    /// Distinct sources placed in the prompt, in selection order.
    pub fn contributing_sources(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for c in &self.selected {
            if !seen.contains(&c.item.source) {
                seen.push(c.item.source.clone());
            }
        }
        seen
    }
}

/// Instruction wrapper with an optional context block ahead of the query.
pub fn render_prompt(bundle: &ContextBundle) -> String {
    let mut out = String::from(PROMPT_OPEN);
    let has_context = !bundle.selected.is_empty() || bundle.price_narrative.is_some();
    if has_context {
        out.push_str("Context:\n");
        for c in &bundle.selected {
            out.push_str(&c.item.source);
            out.push_str(": ");
            out.push_str(&c.item.headline);
            out.push('\n');
        }
        if let Some(n) = &bundle.price_narrative {
            out.push_str("Price context: ");
            out.push_str(n);
            out.push('\n');
        }
    }
    out.push_str(INSTRUCTION);
    out.push(' ');
    out.push_str(&bundle.query.headline);
    out.push_str(PROMPT_CLOSE);
    out
}

/// Recovers the query sentence from a prompt rendered by [`render_prompt`].
pub fn query_sentence(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(INSTRUCTION)? + INSTRUCTION.len();
    let rest = prompt[start..].trim_start();
    Some(rest.strip_suffix(PROMPT_CLOSE).unwrap_or(rest).trim())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// 0 disables retrieval entirely.
    pub k: usize,
    pub window_days: u32,
    pub scorer: ScorerKind,
    pub price_context: bool,
    pub cue_filter: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            window_days: DEFAULT_WINDOW_DAYS,
            scorer: ScorerKind::Cosine,
            price_context: false,
            cue_filter: true,
        }
    }
}

/// The full retrieval path over an immutable corpus snapshot.
pub struct Retriever<'a> {
    pub corpus: &'a CorpusStore,
    pub prices: Option<&'a PriceStore>,
    pub embedder: &'a dyn EmbeddingProvider,
    pub lexicon: &'a SentimentCueLexicon,
    pub config: RetrievalConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub bundle: ContextBundle,
    pub excluded: Vec<Exclusion>,
}

impl Retriever<'_> {
    pub fn retrieve(&self, query: &NewsItem, weights: &SourceWeights) -> Result<Retrieved> {
        let narrative = match (self.config.price_context, self.prices) {
            (true, Some(prices)) => Some(price_narrative(prices.preceding(
                &query.symbol,
                query.date,
                3,
            ))),
            _ => None,
        };
        if self.config.k == 0 {
            return Ok(Retrieved {
                bundle: ContextBundle::new(query.clone(), Vec::new(), narrative),
                excluded: Vec::new(),
            });
        }
        let mut candidates = self
            .corpus
            .candidates_for(query, self.config.window_days, weights)?;
        if self.config.cue_filter {
            candidates = cue_filter(candidates, query, self.lexicon);
        }
        let scorer = match self.config.scorer {
            ScorerKind::Cosine => Scorer::Cosine(self.embedder),
            ScorerKind::Overlap => Scorer::Overlap,
        };
        let selection = score_and_select(&candidates, query, weights, scorer, self.config.k)?;
        Ok(Retrieved {
            bundle: ContextBundle::new(query.clone(), selection.selected, narrative),
            excluded: selection.excluded,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use chrono::NaiveDate;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn news(id: &str, headline: &str, source: &str) -> NewsItem {
        NewsItem {
            id: id.into(),
            headline: headline.into(),
            source: source.into(),
            symbol: "TCS".into(),
            date: d("2024-05-02"),
        }
    }

    #[test]
    fn cue_filter_rules() {
        let lex = SentimentCueLexicon::default();
        let q = news("q", "TCS shares gain on order win", "A");
        let conflict = news("c1", "IT stocks fall sharply", "A");
        let silent = news("c2", "TCS board meeting on Friday", "A");
        let both = news("c3", "TCS gains even as peers fall", "A");
        let neutral_only = news("c4", "TCS stable ahead of results", "A");
        let out = cue_filter(vec![&conflict, &silent, &both, &neutral_only], &q, &lex);
        assert_eq!(
            out.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(),
            ["c2", "c3"]
        );

        let plain = news("q2", "TCS board meeting on Friday", "A");
        assert_eq!(cue_filter(vec![&conflict, &silent], &plain, &lex).len(), 2);
        let mixed = news("q3", "TCS gains while Infosys falls", "A");
        assert_eq!(cue_filter(vec![&conflict, &silent], &mixed, &lex).len(), 2);
    }

    #[test]
    fn lexicon_must_be_disjoint() {
        assert!(SentimentCueLexicon::new(&["gain"], &["Gain"], &[]).is_err());
        assert!(SentimentCueLexicon::default().len() >= 30);
    }

    #[test]
    fn weight_dominates_similarity() {
        // Two single-token headlines against a query: overlap 1.0 vs 1.0, so
        // use an embedder-free check through Overlap with unequal overlaps.
        let q = news("q", "alpha beta", "A");
        let a = news("a", "alpha beta gamma", "A"); // overlap 1.0
        let b = news("b", "alpha delta", "B"); // overlap 0.5
        let w = SourceWeights::new([("A".into(), 0.1), ("B".into(), 0.9)]).unwrap();
        let sel = score_and_select(&[&a, &b], &q, &w, Scorer::Overlap, 3).unwrap();
        assert_eq!(sel.selected[0].item.id, "b");
        assert!((sel.selected[0].weighted_score - 0.45).abs() < 1e-12);
        assert!((sel.selected[1].weighted_score - 0.1).abs() < 1e-12);
        assert!(score_and_select(&[&a], &q, &w, Scorer::Overlap, 0).is_err());
    }

    #[test]
    fn sims_times_weights_example() {
        // sims [0.8, 0.9], weights [0.5, 0.1] -> [0.40, 0.09]
        let mk = |id: &str, sim: f64, w: f64| RetrievalCandidate {
            item: news(id, "x", "A"),
            similarity: sim,
            weighted_score: sim * w,
        };
        let mut v = [mk("second", 0.9, 0.1), mk("first", 0.8, 0.5)];
        v.sort_by(rank_order);
        assert_eq!(v[0].item.id, "first");
        assert!((v[0].weighted_score - 0.40).abs() < 1e-12);
        assert!((v[1].weighted_score - 0.09).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_date_then_id() {
        let mk = |id: &str, date: &str| RetrievalCandidate {
            item: NewsItem {
                date: d(date),
                ..news(id, "x", "A")
            },
            similarity: 0.5,
            weighted_score: 0.25,
        };
        let mut v = [
            mk("b", "2024-05-01"),
            mk("c", "2024-05-02"),
            mk("a", "2024-05-01"),
        ];
        v.sort_by(rank_order);
        assert_eq!(
            v.iter().map(|c| c.item.id.as_str()).collect::<Vec<_>>(),
            ["c", "a", "b"]
        );
    }

    #[test]
    fn overlap_exclusion_is_reported() {
        let q = news("q", "alpha", "A");
        let junk = news("j", "!!!", "A");
        let ok = news("o", "alpha", "A");
        let w = SourceWeights::uniform(["A"]).unwrap();
        // query non-empty, candidate empty -> overlap 0, still scored
        let sel = score_and_select(&[&junk, &ok], &q, &w, Scorer::Overlap, 2).unwrap();
        assert_eq!(sel.selected.len(), 2);
        let empty_q = news("q", "???", "A");
        let sel = score_and_select(&[&junk], &empty_q, &w, Scorer::Overlap, 2).unwrap();
        assert!(sel.selected.is_empty());
        assert_eq!(sel.excluded[0].id, "j");
        // cosine: an unembeddable candidate is excluded, not fatal
        let e = HashEmbedder::default();
        let sel = score_and_select(&[&junk, &ok], &q, &w, Scorer::Cosine(&e), 2).unwrap();
        assert_eq!(sel.selected.len(), 1);
        assert_eq!(sel.excluded.len(), 1);
    }

    #[test]
    fn narrative_template() {
        let bar = |o: f64| PriceBar::new("SYMBOL", d("2024-01-01"), o);
        assert_eq!(
            price_narrative(&[bar(100.0), bar(102.0), bar(101.0)]),
            "Over the last 3 trading days, SYMBOL opened at 100.00, 102.00 (+2.00%), 101.00 (-0.98%)."
        );
        assert_eq!(price_narrative(&[]), "");
        assert_eq!(
            price_narrative(&[bar(55.5)]),
            "Over the last 1 trading day, SYMBOL opened at 55.50."
        );
    }

    #[test]
    fn prompt_shapes() {
        let q = news("q", "TCS shares gain", "A");
        let bare = ContextBundle::new(q.clone(), vec![], None);
        assert_eq!(
            bare.rendered_prompt,
            "<s>[INST] Classify the sentiment of the following financial sentence: TCS shares gain [/INST]"
        );
        assert_eq!(
            query_sentence(&bare.rendered_prompt),
            Some("TCS shares gain")
        );

        let cand = |id: &str, h: &str, s: &str| RetrievalCandidate {
            item: news(id, h, s),
            similarity: 0.5,
            weighted_score: 0.1,
        };
        let b = ContextBundle::new(
            q.clone(),
            vec![
                cand("1", "first context", "Mint"),
                cand("2", "second context", "ET Now"),
            ],
            Some("Over the last 1 trading day, TCS opened at 1.00.".into()),
        );
        let p = &b.rendered_prompt;
        let (i1, i2, iq) = (
            p.find("first context").unwrap(),
            p.find("second context").unwrap(),
            p.find("TCS shares gain").unwrap(),
        );
        assert!(i1 < i2 && i2 < iq);
        assert!(p.contains("Mint: first context\nET Now: second context\nPrice context: "));
        assert_eq!(render_prompt(&b), b.rendered_prompt);
        assert_eq!(query_sentence(p), Some("TCS shares gain"));
        assert_eq!(b.contributing_sources(), ["Mint", "ET Now"]);
        // empty narrative is dropped
        assert_eq!(
            ContextBundle::new(q, vec![], Some(String::new())).rendered_prompt,
            bare.rendered_prompt
        );
    }
}
