//! A seeded toy market with known per-source reliability.
//!
//! Each query headline has one related context item per source on the same
//! day. Context items share a random subset of the query's topic words, so
//! similarity varies item by item and source weights decide close rankings.
//! Price paths alternate calm days with large moves, which keeps return-based
//! labels and return-direction alignment in broad agreement.

use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{OracleClassifier, OracleFidelity};
use crate::corpus::{write_jsonl, CorpusStore, NewsItem, SourceRegistry};
use crate::error::{Error, Result};
use crate::marketdata::{
    label_headlines, LabeledHeadline, PriceBar, PriceStore, DEFAULT_LABEL_WINDOW,
};
use crate::seed::keyed_rng;

pub const DEFAULT_FIDELITIES: [(&str, f64); 5] = [
    ("Ledger", 0.9),
    ("Courier", 0.7),
    ("Gazette", 0.5),
    ("Herald", 0.5),
    ("Bulletin", 0.3),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub symbols: usize,
    /// Trading days carrying queries, after the warm-up.
    pub query_days: usize,
    /// Trading days before the first query, so rolling stats exist.
    pub warmup_days: usize,
    pub start: NaiveDate,
    pub sources: Vec<(String, f64)>,
    pub topic_words: usize,
    /// Inclusive range of topic words a context item keeps.
    pub shared_min: usize,
    pub shared_max: usize,
    pub filler_words: usize,
    /// Probability that a source covers a given story; at least one always does.
    pub coverage: f64,
    /// Chance that the next block is one calm day rather than a pair of large moves.
    pub calm_prob: f64,
    pub big_move: (f64, f64),
    pub calm_move: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            symbols: 10,
            query_days: 200,
            warmup_days: 40,
            start: NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date"),
            sources: DEFAULT_FIDELITIES
                .iter()
                .map(|(n, f)| (n.to_string(), *f))
                .collect(),
            topic_words: 8,
            shared_min: 6,
            shared_max: 8,
            filler_words: 2,
            coverage: 0.6,
            calm_prob: 0.3,
            big_move: (0.045, 0.055),
            calm_move: 0.004,
        }
    }
}

/// Everything a run needs: prices, context corpus, queries, uniform registry,
/// and the ground-truth source fidelities.
#[derive(Debug, Clone)]
pub struct World {
    pub config: SyntheticConfig,
    pub prices: PriceStore,
    pub corpus: CorpusStore,
    pub registry: SourceRegistry,
    pub queries: Vec<NewsItem>,
    pub fidelity: OracleFidelity,
}

const SYLLABLES: &[&str] = &[
    "ba", "ko", "ri", "ta", "mu", "len", "so", "vi", "dra", "pe", "zu", "ran", "ki", "lo", "ne",
    "sha",
];

fn word(rng: &mut impl Rng) -> String {
    let n = rng.random_range(2..=3);
    (0..n)
        .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
        .collect()
}

/// Calm days, and large moves that come in opposite-signed pairs so the
/// trailing mean stays near zero and large moves clear the one-sigma bands.
fn return_path(config: &SyntheticConfig, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        if rng.random_bool(config.calm_prob) {
            out.push(rng.random_range(-config.calm_move..=config.calm_move));
        } else {
            let m = rng.random_range(config.big_move.0..=config.big_move.1);
            let first = if rng.random_bool(0.5) { m } else { -m };
            let m2 = rng.random_range(config.big_move.0..=config.big_move.1);
            out.push(first);
            out.push(-first.signum() * m2);
        }
    }
    out.truncate(n);
    out
}

fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

impl World {
    pub fn generate(config: SyntheticConfig) -> Result<Self> {
        if config.sources.is_empty() || config.symbols == 0 || config.query_days == 0 {
            return Err(Error::Config(
                "synthetic world needs sources, symbols and query days".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.coverage) {
            return Err(Error::Config("coverage must lie in [0, 1]".into()));
        }
        if config.shared_min == 0
            || config.shared_min > config.shared_max
            || config.shared_max > config.topic_words
        {
            return Err(Error::Config(
                "need 1 <= shared_min <= shared_max <= topic_words".into(),
            ));
        }
        let fidelity = OracleFidelity::new(config.sources.clone())?;
        let registry = SourceRegistry::uniform(config.sources.iter().map(|(n, _)| n.clone()))?;
        // One extra trading day so the last query has a next-day return.
        let days = trading_days(config.start, config.warmup_days + config.query_days + 1);

        let mut bars = Vec::new();
        let mut corpus = CorpusStore::new();
        let mut queries = Vec::new();
        for s in 0..config.symbols {
            let symbol = format!("SYN{s:02}");
            let mut rng = keyed_rng(config.seed, &format!("prices/{symbol}"));
            let returns = return_path(&config, days.len() - 1, &mut rng);
            let mut open = 100.0;
            bars.push(PriceBar::new(&symbol, days[0], open));
            for (&date, r) in days[1..].iter().zip(returns) {
                open *= 1.0 + r;
                bars.push(PriceBar::new(&symbol, date, open));
            }

            let mut rng = keyed_rng(config.seed, &format!("news/{symbol}"));
            for &date in &days[config.warmup_days..config.warmup_days + config.query_days] {
                let topic: Vec<String> = (0..config.topic_words).map(|_| word(&mut rng)).collect();
                let qid = format!("q-{symbol}-{date}");
                queries.push(NewsItem {
                    id: qid,
                    headline: format!("{symbol} {}", topic.join(" ")),
                    source: "Query".into(),
                    symbol: symbol.clone(),
                    date,
                });
                let mut covering: Vec<bool> = config
                    .sources
                    .iter()
                    .map(|_| rng.random_bool(config.coverage))
                    .collect();
                if !covering.contains(&true) {
                    let j = rng.random_range(0..covering.len());
                    covering[j] = true;
                }
                for (j, (source, _)) in config.sources.iter().enumerate() {
                    if !covering[j] {
                        continue;
                    }
                    let keep = rng.random_range(config.shared_min..=config.shared_max);
                    let mut idx: Vec<usize> = (0..config.topic_words).collect();
                    idx.shuffle(&mut rng);
                    idx.truncate(keep);
                    idx.sort_unstable();
                    let mut words: Vec<String> = idx.iter().map(|&i| topic[i].clone()).collect();
                    words.extend((0..config.filler_words).map(|_| word(&mut rng)));
                    corpus.insert(NewsItem {
                        id: format!("c-{symbol}-{date}-{j}"),
                        headline: format!("{symbol} {}", words.join(" ")),
                        source: source.clone(),
                        symbol: symbol.clone(),
                        date,
                    });
                }
            }
        }
        queries.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
        Ok(Self {
            prices: PriceStore::from_bars(bars)?,
            corpus,
            registry,
            queries,
            fidelity,
            config,
        })
    }

    /// Queries labeled from prices, in date order.
    pub fn labeled(&self) -> Result<Vec<LabeledHeadline>> {
        label_headlines(&self.queries, &self.prices, DEFAULT_LABEL_WINDOW)
    }

    pub fn oracle(&self, seed: u64) -> OracleClassifier {
        OracleClassifier::new(self.fidelity.clone(), seed, 1.0 / 3.0).expect("valid base rate")
    }

    /// Writes `prices.csv`, `corpus.jsonl`, `queries.jsonl`, `sources.toml` and
    /// `fidelity.toml` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("prices.csv");
        let file = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        self.prices.write_csv(file)?;
        write_jsonl(dir.join("corpus.jsonl"), self.corpus.items())?;
        write_jsonl(dir.join("queries.jsonl"), &self.queries)?;
        let p = dir.join("sources.toml");
        std::fs::write(&p, self.registry.to_toml()).map_err(|e| Error::io(&p, e))?;
        let fid: String = self
            .fidelity
            .iter()
            .map(|(k, v)| format!("{} = {v}\n", toml::Value::String(k.to_string())))
            .collect();
        let p = dir.join("fidelity.toml");
        std::fs::write(&p, fid).map_err(|e| Error::io(&p, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SentimentLabel;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            symbols: 2,
            query_days: 20,
            ..Default::default()
        };
        let a = World::generate(cfg.clone()).unwrap();
        let b = World::generate(cfg).unwrap();
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.corpus.items(), b.corpus.items());
        let n = a.corpus.len();
        assert!((2 * 20..=2 * 20 * 5).contains(&n), "{n}");

        let full = World::generate(SyntheticConfig {
            symbols: 2,
            query_days: 20,
            coverage: 1.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(full.corpus.len(), 2 * 20 * 5);
    }

    #[test]
    fn labels_are_mostly_known_and_mixed() {
        let w = World::generate(SyntheticConfig::default()).unwrap();
        let labeled = w.labeled().unwrap();
        assert_eq!(labeled.len(), 2000);
        let count = |l| labeled.iter().filter(|x| x.label == l).count();
        assert_eq!(count(SentimentLabel::Unknown), 0);
        for l in [
            SentimentLabel::Positive,
            SentimentLabel::Negative,
            SentimentLabel::Neutral,
        ] {
            assert!(count(l) > 300, "{l}: {}", count(l));
        }
    }
}
