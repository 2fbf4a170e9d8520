//! Open-price series, daily returns, trailing statistics and return-grounded labels.
//!
//! A headline dated `d` is labeled by the return realized on the first trading
//! day strictly after `d`, compared against the mean and sample standard
//! deviation of the `window` returns strictly before that day.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::NewsItem;
use crate::error::{Error, Result};

pub const DEFAULT_LABEL_WINDOW: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub symbol: String,
    pub date: NaiveDate,
    pub open: f64,
}

impl PriceBar {
    pub fn new(symbol: impl Into<String>, date: NaiveDate, open: f64) -> Self {
        Self {
            symbol: symbol.into(),
            date,
            open,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyReturn {
    pub symbol: String,
    pub date: NaiveDate,
    /// Fractional: 0.02 is +2%.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingStats {
    pub mean: f64,
    pub std: f64,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
    Unknown,
}

impl SentimentLabel {
    /// The three classes a classifier may emit, in confusion-matrix order.
    pub const CLASSES: [SentimentLabel; 3] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Unknown => "unknown",
        }
    }

    /// Position in [`Self::CLASSES`]; `None` for `Unknown`.
    pub fn class_index(self) -> Option<usize> {
        match self {
            SentimentLabel::Positive => Some(0),
            SentimentLabel::Negative => Some(1),
            SentimentLabel::Neutral => Some(2),
            SentimentLabel::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != SentimentLabel::Unknown
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Open-to-open returns over consecutive bars of one symbol.
///
/// Fewer than two bars yield an empty result. Bars must be sorted ascending by
/// date without duplicates.
pub fn compute_returns(bars: &[PriceBar]) -> Result<Vec<DailyReturn>> {
    for bar in bars {
        if !bar.open.is_finite() || bar.open <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "non-positive open {} for {} on {}",
                bar.open, bar.symbol, bar.date
            )));
        }
    }
    for pair in bars.windows(2) {
        if pair[0].symbol != pair[1].symbol {
            return Err(Error::InvalidInput(format!(
                "mixed symbols {} and {}",
                pair[0].symbol, pair[1].symbol
            )));
        }
        if pair[1].date <= pair[0].date {
            return Err(Error::InvalidInput(format!(
                "bars for {} not strictly ascending at {}",
                pair[1].symbol, pair[1].date
            )));
        }
    }
    Ok(bars
        .windows(2)
        .map(|pair| DailyReturn {
            symbol: pair[1].symbol.clone(),
            date: pair[1].date,
            value: (pair[1].open - pair[0].open) / pair[0].open,
        })
        .collect())
}

/// Mean and sample standard deviation of the `window` returns dated strictly
/// before `target`. `Ok(None)` when fewer than `window` such returns exist.
pub fn rolling_stats(
    returns: &[DailyReturn],
    target: NaiveDate,
    window: usize,
) -> Result<Option<RollingStats>> {
    if window < 2 {
        return Err(Error::Config(format!(
            "rolling window must be >= 2, got {window}"
        )));
    }
    let end = returns.partition_point(|r| r.date < target);
    if end < window {
        return Ok(None);
    }
    let slice = &returns[end - window..end];
    let n = window as f64;
    let mean = slice.iter().map(|r| r.value).sum::<f64>() / n;
    let var = slice.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Some(RollingStats {
        mean,
        std: var.sqrt(),
        window,
    }))
}

/// Strict thresholds at `mean ± std`; a return exactly on a threshold is neutral.
pub fn label_headline(next_day_return: f64, stats: Option<&RollingStats>) -> SentimentLabel {
    match stats {
        None => SentimentLabel::Unknown,
        Some(s) if next_day_return > s.mean + s.std => SentimentLabel::Positive,
        Some(s) if next_day_return < s.mean - s.std => SentimentLabel::Negative,
        Some(_) => SentimentLabel::Neutral,
    }
}

/// Sorted, de-duplicated set of trading dates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        let mut dates: Vec<NaiveDate> = dates.into_iter().collect();
        dates.sort_unstable();
        dates.dedup();
        Self { dates }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.binary_search(&date).is_ok()
    }

    /// Smallest trading date strictly after `date`.
    pub fn next_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        let idx = self.dates.partition_point(|d| *d <= date);
        self.dates.get(idx).copied()
    }

    /// Largest trading date strictly before `date`.
    pub fn previous_before(&self, date: NaiveDate) -> Option<NaiveDate> {
        let idx = self.dates.partition_point(|d| *d < date);
        idx.checked_sub(1).map(|i| self.dates[i])
    }
}

pub fn align_headline_to_next_trading_day(
    headline_date: NaiveDate,
    calendar: &TradingCalendar,
) -> Option<NaiveDate> {
    calendar.next_after(headline_date)
}

/// Per-symbol open-price series keyed by ticker.
#[derive(Debug, Clone, Default)]
pub struct PriceStore {
    series: BTreeMap<String, Vec<PriceBar>>,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    symbol: String,
    date: String,
    open: String,
}

impl PriceStore {
    /// Groups and sorts bars; rejects non-positive opens and duplicate `(symbol, date)`.
    pub fn from_bars(bars: impl IntoIterator<Item = PriceBar>) -> Result<Self> {
        let mut series: BTreeMap<String, Vec<PriceBar>> = BTreeMap::new();
        for bar in bars {
            if !bar.open.is_finite() || bar.open <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "non-positive open {} for {} on {}",
                    bar.open, bar.symbol, bar.date
                )));
            }
            series.entry(bar.symbol.clone()).or_default().push(bar);
        }
        for bars in series.values_mut() {
            bars.sort_by_key(|b| b.date);
            if let Some(pair) = bars.windows(2).find(|p| p[0].date == p[1].date) {
                return Err(Error::InvalidInput(format!(
                    "duplicate bar for {} on {}",
                    pair[0].symbol, pair[0].date
                )));
            }
        }
        Ok(Self { series })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    /// Reads `symbol,date,open` rows. The first bad row aborts the load with its line number.
    pub fn from_csv_reader(reader: impl Read, file: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        for required in ["symbol", "date", "open"] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::Row {
                    file: file.to_string(),
                    line: 1,
                    message: format!("missing column {required:?}"),
                });
            }
        }
        let mut bars = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let row_err = |message: String| Error::Row {
                file: file.to_string(),
                line,
                message,
            };
            let row: PriceRow = record
                .deserialize(Some(&headers))
                .map_err(|e| row_err(e.to_string()))?;
            if row.symbol.is_empty() {
                return Err(row_err("empty symbol".into()));
            }
            let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
                .map_err(|e| row_err(format!("bad date {:?}: {e}", row.date)))?;
            let open: f64 = row
                .open
                .parse()
                .map_err(|_| row_err(format!("bad open {:?}", row.open)))?;
            if !open.is_finite() || open <= 0.0 {
                return Err(row_err(format!("open must be positive, got {open}")));
            }
            bars.push(PriceBar::new(row.symbol, date, open));
        }
        Self::from_bars(bars)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["symbol", "date", "open"])?;
        for bar in self.series.values().flatten() {
            w.write_record([
                bar.symbol.as_str(),
                &bar.date.format("%Y-%m-%d").to_string(),
                &bar.open.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn bars(&self, symbol: &str) -> &[PriceBar] {
        self.series.get(symbol).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn calendar(&self, symbol: &str) -> TradingCalendar {
        TradingCalendar::new(self.bars(symbol).iter().map(|b| b.date))
    }

    pub fn returns(&self, symbol: &str) -> Result<Vec<DailyReturn>> {
        compute_returns(self.bars(symbol))
    }

    /// Up to `n` bars dated strictly before `date`, oldest first.
    pub fn preceding(&self, symbol: &str, date: NaiveDate, n: usize) -> &[PriceBar] {
        let bars = self.bars(symbol);
        let end = bars.partition_point(|b| b.date < date);
        &bars[end.saturating_sub(n)..end]
    }
}

/// A headline with its market-grounded truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledHeadline {
    #[serde(flatten)]
    pub item: NewsItem,
    pub label: SentimentLabel,
    /// Return on `return_date`; absent when no later trading day (or no prior bar) exists.
    pub next_day_return: Option<f64>,
    pub return_date: Option<NaiveDate>,
}

/// Labels every headline against its symbol's price series.
pub fn label_headlines(
    items: &[NewsItem],
    prices: &PriceStore,
    window: usize,
) -> Result<Vec<LabeledHeadline>> {
    if window < 2 {
        return Err(Error::Config(format!(
            "rolling window must be >= 2, got {window}"
        )));
    }
    let mut cache: BTreeMap<&str, (TradingCalendar, Vec<DailyReturn>)> = BTreeMap::new();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        if !cache.contains_key(item.symbol.as_str()) {
            let cal = prices.calendar(&item.symbol);
            let rets = prices.returns(&item.symbol)?;
            cache.insert(item.symbol.as_str(), (cal, rets));
        }
        let (cal, rets) = &cache[item.symbol.as_str()];
        let aligned = align_headline_to_next_trading_day(item.date, cal);
        let ret = aligned.and_then(|d| {
            rets.binary_search_by_key(&d, |r| r.date)
                .ok()
                .map(|i| &rets[i])
        });
        let (label, next_day_return, return_date) = match ret {
            Some(r) => {
                let stats = rolling_stats(rets, r.date, window)?;
                (
                    label_headline(r.value, stats.as_ref()),
                    Some(r.value),
                    Some(r.date),
                )
            }
            None => (SentimentLabel::Unknown, None, None),
        };
        out.push(LabeledHeadline {
            item: item.clone(),
            label,
            next_day_return,
            return_date,
        });
    }
    Ok(out)
}
