//! News corpus ingestion, the source registry, and date/symbol candidate lookup.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{Days, NaiveDate};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{SourceWeights, SIMPLEX_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub headline: String,
    pub source: String,
    pub symbol: String,
    pub date: NaiveDate,
}

/// Strips HTML tags, decodes the common entities, collapses whitespace.
pub fn normalize_headline(raw: &str) -> String {
    let mut stripped = String::with_capacity(raw.len());
    let mut in_tag = false;
    for ch in raw.chars() {
        match ch {
            '<' => {
                in_tag = true;
                stripped.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if in_tag => {}
            _ => stripped.push(ch),
        }
    }
    let decoded = stripped
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ordered `(source, initial weight)` list.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRegistry {
    entries: IndexMap<String, f64>,
}

/// Initial weights with Business Standard and NDTV Profit leading; the tail
/// follows the same descending editorial ranking.
const REFERENCE_PRESET: [(&str, f64); 10] = [
    ("Business Standard", 0.1523),
    ("NDTV Profit", 0.1480),
    ("Financial Express", 0.1250),
    ("The Economic Times", 0.1180),
    ("Mint", 0.1100),
    ("MoneyControl", 0.0950),
    ("Business Today", 0.0800),
    ("ET Now", 0.0700),
    ("Zee Business", 0.0567),
    ("Yahoo Finance", 0.0450),
];

impl SourceRegistry {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        // Reuse the simplex validation.
        let weights = SourceWeights::new(entries)?;
        Ok(Self {
            entries: weights.iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
    }

    pub fn reference_preset() -> Self {
        Self::new(REFERENCE_PRESET.iter().map(|(n, w)| (n.to_string(), *w)))
            .expect("preset lies on the simplex")
    }

    pub fn uniform<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let w = SourceWeights::uniform(names)?;
        Ok(Self {
            entries: w.iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
    }

    /// Parses `name = weight` lines (TOML syntax; quote names containing spaces).
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("source registry: {e}")))?;
        let mut entries = Vec::with_capacity(table.len());
        for (name, value) in table {
            let w = match value {
                toml::Value::Float(f) => f,
                toml::Value::Integer(i) => i as f64,
                other => {
                    return Err(Error::Config(format!(
                        "source registry: weight for {name:?} is not a number: {other}"
                    )))
                }
            };
            entries.push((name, w));
        }
        Self::new(entries).map_err(|e| Error::Config(format!("source registry: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{} = {v}\n", toml::Value::String(k.clone())))
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds an unseen source at weight 0 (invisible to retrieval until promoted).
    pub fn register_silent(&mut self, name: &str) {
        self.entries.entry(name.to_string()).or_insert(0.0);
    }

    pub fn weights(&self) -> SourceWeights {
        SourceWeights::new(self.entries.iter().map(|(k, v)| (k.clone(), *v)))
            .expect("registry invariant")
    }

    pub fn uniform_weights(&self) -> SourceWeights {
        SourceWeights::uniform(self.entries.keys().cloned()).expect("non-empty registry")
    }

    pub fn sum(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= SIMPLEX_TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownSourcePolicy {
    #[default]
    AutoRegister,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Malformed,
    BlankHeadline,
    BadDate,
    UnknownSource,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub line: usize,
    pub reason: RejectReason,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub per_source: IndexMap<String, usize>,
    pub rejected: BTreeMap<RejectReason, usize>,
    pub auto_registered: Vec<String>,
    pub errors: Vec<RowError>,
}

impl IngestReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    fn reject(&mut self, line: usize, reason: RejectReason, message: String) {
        *self.rejected.entry(reason).or_default() += 1;
        self.errors.push(RowError {
            line,
            reason,
            message,
        });
    }
}

#[derive(Debug, Deserialize)]
struct RawItem {
    id: String,
    headline: String,
    source: String,
    symbol: String,
    date: String,
}

/// Immutable-after-ingest news store, indexed by symbol.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    items: Vec<NewsItem>,
    index: HashMap<String, usize>,
    /// symbol -> indices into `items`, sorted by (date, id).
    by_symbol: HashMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

impl CorpusStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn items(&self) -> &[NewsItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&NewsItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    /// Adds an item directly; false if the id is already present.
    pub fn insert(&mut self, item: NewsItem) -> bool {
        if self.index.contains_key(&item.id) {
            return false;
        }
        let idx = self.items.len();
        self.index.insert(item.id.clone(), idx);
        let list = self.by_symbol.entry(item.symbol.clone()).or_default();
        let pos = list.partition_point(|&j| {
            let other = &self.items[j];
            (other.date, other.id.as_str()) < (item.date, item.id.as_str())
        });
        list.insert(pos, idx);
        self.items.push(item);
        true
    }

    /// Ingests a file; format chosen by extension (`.csv`, anything else JSONL).
    pub fn ingest_path(
        &mut self,
        path: impl AsRef<Path>,
        registry: &mut SourceRegistry,
        policy: UnknownSourcePolicy,
    ) -> Result<IngestReport> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        self.ingest_reader(file, InputFormat::from_path(path), registry, policy)
    }

    pub fn ingest_reader(
        &mut self,
        reader: impl Read,
        format: InputFormat,
        registry: &mut SourceRegistry,
        policy: UnknownSourcePolicy,
    ) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        for name in registry.names() {
            report.per_source.insert(name.to_string(), 0);
        }
        let rows = read_raw_rows(reader, format)?;
        for (line, row) in rows {
            let raw = match row {
                Ok(raw) => raw,
                Err(msg) => {
                    report.reject(line, RejectReason::Malformed, msg);
                    continue;
                }
            };
            let item = match validate(raw) {
                Ok(item) => item,
                Err((reason, msg)) => {
                    report.reject(line, reason, msg);
                    continue;
                }
            };
            if !registry.contains(&item.source) {
                match policy {
                    UnknownSourcePolicy::Reject => {
                        report.reject(
                            line,
                            RejectReason::UnknownSource,
                            format!("unknown source {:?}", item.source),
                        );
                        continue;
                    }
                    UnknownSourcePolicy::AutoRegister => {
                        registry.register_silent(&item.source);
                        report.auto_registered.push(item.source.clone());
                        report.per_source.insert(item.source.clone(), 0);
                    }
                }
            }
            let source = item.source.clone();
            let id = item.id.clone();
            if self.insert(item) {
                report.accepted += 1;
                *report.per_source.entry(source).or_default() += 1;
            } else {
                report.reject(
                    line,
                    RejectReason::DuplicateId,
                    format!("duplicate id {id:?}"),
                );
            }
        }
        Ok(report)
    }

    /// Items for `symbol` dated within `±window_days/2` calendar days of
    /// `center_date` whose source has positive weight.
    pub fn candidates(
        &self,
        symbol: &str,
        center_date: NaiveDate,
        window_days: u32,
        weights: &SourceWeights,
    ) -> Result<Vec<&NewsItem>> {
        if window_days == 0 || window_days.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "candidate window must be odd and >= 1, got {window_days}"
            )));
        }
        let half = Days::new(u64::from(window_days / 2));
        let lo = center_date.checked_sub_days(half).unwrap_or(NaiveDate::MIN);
        let hi = center_date.checked_add_days(half).unwrap_or(NaiveDate::MAX);
        let Some(list) = self.by_symbol.get(symbol) else {
            return Ok(Vec::new());
        };
        let start = list.partition_point(|&j| self.items[j].date < lo);
        Ok(list[start..]
            .iter()
            .map(|&j| &self.items[j])
            .take_while(|item| item.date <= hi)
            .filter(|item| weights.get(&item.source) > 0.0)
            .collect())
    }

    /// As [`Self::candidates`] around the query's date, excluding the query itself.
    pub fn candidates_for(
        &self,
        query: &NewsItem,
        window_days: u32,
        weights: &SourceWeights,
    ) -> Result<Vec<&NewsItem>> {
        let mut out = self.candidates(&query.symbol, query.date, window_days, weights)?;
        out.retain(|item| item.id != query.id);
        Ok(out)
    }
}

type RawRows = Vec<(usize, std::result::Result<RawItem, String>)>;

fn read_raw_rows(reader: impl Read, format: InputFormat) -> Result<RawRows> {
    let mut rows = Vec::new();
    match format {
        InputFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line = line.map_err(|e| Error::io("<news>", e))?;
                if line.trim().is_empty() {
                    continue;
                }
                rows.push((
                    i + 1,
                    serde_json::from_str::<RawItem>(&line).map_err(|e| e.to_string()),
                ));
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
            let headers = rdr.headers()?.clone();
            for record in rdr.records() {
                match record {
                    Ok(rec) => {
                        let line = rec.position().map_or(0, |p| p.line() as usize);
                        rows.push((
                            line,
                            rec.deserialize::<RawItem>(Some(&headers))
                                .map_err(|e| e.to_string()),
                        ));
                    }
                    Err(e) => {
                        let line = e.position().map_or(0, |p| p.line() as usize);
                        rows.push((line, Err(e.to_string())));
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn validate(raw: RawItem) -> std::result::Result<NewsItem, (RejectReason, String)> {
    let headline = normalize_headline(&raw.headline);
    if headline.is_empty() {
        return Err((
            RejectReason::BlankHeadline,
            format!("blank headline for id {:?}", raw.id),
        ));
    }
    if raw.id.trim().is_empty() || raw.source.trim().is_empty() || raw.symbol.trim().is_empty() {
        return Err((RejectReason::Malformed, "empty id, source or symbol".into()));
    }
    let date = NaiveDate::parse_from_str(raw.date.trim(), "%Y-%m-%d").map_err(|e| {
        (
            RejectReason::BadDate,
            format!("bad date {:?}: {e}", raw.date),
        )
    })?;
    Ok(NewsItem {
        id: raw.id.trim().to_string(),
        headline,
        source: raw.source.trim().to_string(),
        symbol: raw.symbol.trim().to_string(),
        date,
    })
}

/// Reads query headlines (no registry check, no de-duplication).
pub fn read_headlines(path: impl AsRef<Path>) -> Result<Vec<NewsItem>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let file_name = path.display().to_string();
    let mut out = Vec::new();
    for (line, row) in read_raw_rows(file, InputFormat::from_path(path))? {
        let raw = row.map_err(|message| Error::Row {
            file: file_name.clone(),
            line,
            message,
        })?;
        let item = validate(raw).map_err(|(_, message)| Error::Row {
            file: file_name.clone(),
            line,
            message,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn item(id: &str, source: &str, date: &str) -> String {
        format!(
            r#"{{"id":"{id}","headline":"TCS gains on deal","source":"{source}","symbol":"TCS","date":"{date}"}}"#
        )
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_headline("<b>TCS gains</b>  5%"), "TCS gains 5%");
        assert_eq!(normalize_headline("plain headline"), "plain headline");
        assert_eq!(normalize_headline("  a \t b  "), "a b");
        assert_eq!(normalize_headline("M&amp;M<br/>rises"), "M&M rises");
        assert_eq!(normalize_headline("<p>  </p>"), "");
    }

    #[test]
    fn registry_parse_and_validate() {
        let reg = SourceRegistry::parse("\"Business Standard\" = 0.6\nMint = 0.4\n").unwrap();
        assert_eq!(
            reg.names().collect::<Vec<_>>(),
            vec!["Business Standard", "Mint"]
        );
        assert!(SourceRegistry::parse("A = 0.6\nB = 0.6\n").is_err());
        assert!(SourceRegistry::parse("A = \"x\"").is_err());
        let reg = SourceRegistry::reference_preset();
        assert!(reg.is_normalized());
        assert_eq!(SourceRegistry::parse(&reg.to_toml()).unwrap(), reg);
    }

    #[test]
    fn ingest_counts_and_rejections() {
        let mut reg = SourceRegistry::uniform(["A", "B"]).unwrap();
        let data = [
            item("1", "A", "2024-01-02"),
            item("2", "B", "2024-01-02"),
            r#"{"id":"3","headline":"  <i></i> ","source":"A","symbol":"TCS","date":"2024-01-02"}"#
                .into(),
            "not json".into(),
            item("4", "C", "2024-01-02"),
            item("1", "A", "2024-01-02"),
            item("5", "A", "2024-02-30"),
        ]
        .join("\n");
        let mut store = CorpusStore::new();
        let report = store
            .ingest_reader(
                data.as_bytes(),
                InputFormat::Jsonl,
                &mut reg,
                UnknownSourcePolicy::AutoRegister,
            )
            .unwrap();
        assert_eq!(report.accepted, 3);
        assert_eq!(report.per_source["A"], 1);
        assert_eq!(report.per_source["C"], 1);
        assert_eq!(report.rejected[&RejectReason::BlankHeadline], 1);
        assert_eq!(report.rejected[&RejectReason::Malformed], 1);
        assert_eq!(report.rejected[&RejectReason::DuplicateId], 1);
        assert_eq!(report.rejected[&RejectReason::BadDate], 1);
        assert_eq!(
            report
                .errors
                .iter()
                .find(|e| e.reason == RejectReason::Malformed)
                .unwrap()
                .line,
            4
        );
        assert!(reg.contains("C"));
        assert_eq!(reg.weights().get("C"), 0.0);

        let mut reg = SourceRegistry::uniform(["A"]).unwrap();
        let mut store = CorpusStore::new();
        let report = store
            .ingest_reader(
                item("9", "Z", "2024-01-01").as_bytes(),
                InputFormat::Jsonl,
                &mut reg,
                UnknownSourcePolicy::Reject,
            )
            .unwrap();
        assert_eq!(report.rejected[&RejectReason::UnknownSource], 1);
        assert!(store.is_empty());
    }

    #[test]
    fn ingest_empty_and_csv() {
        let mut reg = SourceRegistry::uniform(["A"]).unwrap();
        let mut store = CorpusStore::new();
        let report = store
            .ingest_reader(
                &b""[..],
                InputFormat::Jsonl,
                &mut reg,
                UnknownSourcePolicy::Reject,
            )
            .unwrap();
        assert_eq!(report.accepted, 0);
        assert_eq!(report.rejected_total(), 0);
        assert_eq!(report.per_source["A"], 0);

        let csv = "id,headline,source,symbol,date\nx1,\"Infosys falls, again\",A,INFY,2024-03-01\nx2,,A,INFY,2024-03-01\n";
        let report = store
            .ingest_reader(
                csv.as_bytes(),
                InputFormat::Csv,
                &mut reg,
                UnknownSourcePolicy::Reject,
            )
            .unwrap();
        assert_eq!(report.accepted, 1);
        assert_eq!(report.rejected[&RejectReason::BlankHeadline], 1);
        assert_eq!(store.items()[0].headline, "Infosys falls, again");
    }

    #[test]
    fn ingest_is_idempotent() {
        let data = [item("1", "A", "2024-01-02"), item("2", "A", "2024-01-03")].join("\n");
        let mut reg = SourceRegistry::uniform(["A"]).unwrap();
        let mut once = CorpusStore::new();
        once.ingest_reader(
            data.as_bytes(),
            InputFormat::Jsonl,
            &mut reg,
            UnknownSourcePolicy::Reject,
        )
        .unwrap();
        let mut twice = once.clone();
        let r = twice
            .ingest_reader(
                data.as_bytes(),
                InputFormat::Jsonl,
                &mut reg,
                UnknownSourcePolicy::Reject,
            )
            .unwrap();
        assert_eq!(r.accepted, 0);
        assert_eq!(once.items(), twice.items());
    }

    #[test]
    fn candidate_window_and_weights() {
        let data = [
            item("a", "A", "2024-01-09"),
            item("b", "A", "2024-01-10"),
            item("c", "A", "2024-01-11"),
            item("d", "A", "2024-01-12"),
            item("e", "B", "2024-01-11"),
        ]
        .join("\n");
        let mut reg = SourceRegistry::uniform(["A", "B"]).unwrap();
        let mut store = CorpusStore::new();
        store
            .ingest_reader(
                data.as_bytes(),
                InputFormat::Jsonl,
                &mut reg,
                UnknownSourcePolicy::Reject,
            )
            .unwrap();
        let w = reg.weights();
        let ids = |v: Vec<&NewsItem>| v.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
        assert_eq!(
            ids(store.candidates("TCS", d("2024-01-10"), 3, &w).unwrap()),
            ["a", "b", "c", "e"]
        );
        let zero_b = SourceWeights::new([("A".into(), 1.0), ("B".into(), 0.0)]).unwrap();
        assert_eq!(
            ids(store
                .candidates("TCS", d("2024-01-10"), 3, &zero_b)
                .unwrap()),
            ["a", "b", "c"]
        );
        assert_eq!(
            ids(store.candidates("TCS", d("2024-01-10"), 1, &w).unwrap()),
            ["b"]
        );
        assert!(store.candidates("TCS", d("2024-01-10"), 2, &w).is_err());
        assert!(store
            .candidates("INFY", d("2024-01-10"), 3, &w)
            .unwrap()
            .is_empty());
        let q = store.get("b").unwrap().clone();
        assert_eq!(
            ids(store.candidates_for(&q, 3, &w).unwrap()),
            ["a", "c", "e"]
        );
    }
}
