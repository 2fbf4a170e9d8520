//! Browser demo: labeling bands, a feedback-weight simulation and the clipped
//! surrogate curve. Every export takes plain numbers or text and returns JSON.

use chrono::{Days, NaiveDate};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use finsent_core::classifier::Backend;
use finsent_core::embedding::HashEmbedder;
use finsent_core::eval::metrics::accuracy;
use finsent_core::feedback::{run_feedback_epoch, DEFAULT_NEUTRAL_ZONE};
use finsent_core::marketdata::{compute_returns, label_headline, rolling_stats, PriceBar};
use finsent_core::pipeline::Pipeline;
use finsent_core::ppo::clipped_objective;
use finsent_core::retrieval::{RetrievalConfig, Retriever, SentimentCueLexicon};
use finsent_core::synthetic::{SyntheticConfig, World};

const MAX_POINTS: usize = 200;

#[derive(Serialize)]
pub struct BandRow {
    pub day: usize,
    pub open: f64,
    pub ret: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub label: &'static str,
}

/// Parses opens separated by commas, whitespace or newlines.
pub fn parse_opens(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect()
}

/// Labels each day's return against the trailing window, with the band used.
pub fn label_bands(opens: &[f64], window: usize) -> Result<Vec<BandRow>, String> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    let bars: Vec<PriceBar> = opens
        .iter()
        .enumerate()
        .map(|(i, &o)| PriceBar::new("DEMO", start + Days::new(i as u64), o))
        .collect();
    let returns = compute_returns(&bars).map_err(|e| e.to_string())?;
    returns
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let stats = rolling_stats(&returns, r.date, window).map_err(|e| e.to_string())?;
            Ok(BandRow {
                day: i + 1,
                open: opens[i + 1],
                ret: r.value,
                lower: stats.map(|s| s.mean - s.std),
                upper: stats.map(|s| s.mean + s.std),
                label: label_headline(r.value, stats.as_ref()).as_str(),
            })
        })
        .collect()
}

#[derive(Serialize)]
pub struct FeedbackRun {
    pub sources: Vec<String>,
    pub fidelity: Vec<f64>,
    /// Step index of each row in `weights`.
    pub steps: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub accuracy: f64,
    pub items: usize,
}

/// Runs one feedback pass over a seeded synthetic world, starting from uniform weights.
pub fn simulate_feedback(
    seed: u64,
    alpha: f64,
    k: usize,
    symbols: usize,
    days: usize,
) -> Result<FeedbackRun, String> {
    let world = World::generate(SyntheticConfig {
        seed,
        symbols,
        query_days: days,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let data = world.labeled().map_err(|e| e.to_string())?;
    let embedder = HashEmbedder::default();
    let lexicon = SentimentCueLexicon::default();
    let backend = Backend::Oracle(world.oracle(seed));
    let pipeline = Pipeline {
        retriever: Retriever {
            corpus: &world.corpus,
            prices: Some(&world.prices),
            embedder: &embedder,
            lexicon: &lexicon,
            config: RetrievalConfig {
                k,
                ..Default::default()
            },
        },
        backend: &backend,
    };
    let res = run_feedback_epoch(
        &data,
        &pipeline,
        world.registry.uniform_weights(),
        alpha,
        DEFAULT_NEUTRAL_ZONE,
    )
    .map_err(|e| e.to_string())?;
    let n = res.trajectory.steps.len();
    let stride = n.div_ceil(MAX_POINTS).max(1);
    let mut steps: Vec<usize> = (0..n).step_by(stride).collect();
    if steps.last() != Some(&(n - 1)) {
        steps.push(n - 1);
    }
    let sources = res.trajectory.sources.clone();
    let fidelity = sources
        .iter()
        .map(|s| world.fidelity.get(s).unwrap_or(0.0))
        .collect();
    Ok(FeedbackRun {
        weights: steps
            .iter()
            .map(|&i| res.trajectory.steps[i].clone())
            .collect(),
        steps,
        fidelity,
        sources,
        accuracy: accuracy(&res.confusion).unwrap_or(0.0),
        items: data.len(),
    })
}

#[derive(Serialize)]
pub struct Curve {
    pub ratio: Vec<f64>,
    pub unclipped: Vec<f64>,
    pub clipped: Vec<f64>,
}

/// `min(ρA, clip(ρ)A)` next to `ρA` for ρ in `[0, 2]`.
pub fn clip_curve(advantage: f64, epsilon: f64, points: usize) -> Result<Curve, String> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(format!("epsilon must lie in [0, 1), got {epsilon}"));
    }
    let points = points.max(2);
    let ratio: Vec<f64> = (0..points)
        .map(|i| 2.0 * i as f64 / (points - 1) as f64)
        .collect();
    Ok(Curve {
        unclipped: ratio.iter().map(|r| r * advantage).collect(),
        clipped: ratio
            .iter()
            .map(|&r| clipped_objective(r, advantage, epsilon))
            .collect(),
        ratio,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = labelBands)]
pub fn label_bands_js(opens: &str, window: usize) -> Result<String, JsValue> {
    to_js(parse_opens(opens).and_then(|o| label_bands(&o, window)))
}

#[wasm_bindgen(js_name = simulateFeedback)]
pub fn simulate_feedback_js(
    seed: u32,
    alpha: f64,
    k: usize,
    symbols: usize,
    days: usize,
) -> Result<String, JsValue> {
    to_js(simulate_feedback(u64::from(seed), alpha, k, symbols, days))
}

#[wasm_bindgen(js_name = clipCurve)]
pub fn clip_curve_js(advantage: f64, epsilon: f64, points: usize) -> Result<String, JsValue> {
    to_js(clip_curve(advantage, epsilon, points))
}
