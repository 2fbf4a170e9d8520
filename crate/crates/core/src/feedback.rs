//! Direct market feedback: nudge the weights of sources that fed a prediction
//! up or down by `alpha` depending on whether the next-day return agreed.
//!
//! Per aligned/misaligned item: add or subtract `alpha` for each contributing
//! source, clamp every weight to `[0, 1]`, renormalize. Returns inside the
//! neutral zone, and items without a known label, change nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::ConfusionMatrix;
use crate::marketdata::{LabeledHeadline, SentimentLabel};
use crate::pipeline::{Pipeline, PredictionRecord};
pub use crate::weights::SourceWeights;

pub const DEFAULT_ALPHA: f64 = 1e-4;
pub const DEFAULT_NEUTRAL_ZONE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Aligned,
    Misaligned,
    Skipped,
}

pub fn judge_alignment(predicted: SentimentLabel, next_day_return: f64, zone: f64) -> Verdict {
    if next_day_return.abs() <= zone {
        return Verdict::Skipped;
    }
    let aligned = match predicted {
        SentimentLabel::Positive => next_day_return > zone,
        SentimentLabel::Negative => next_day_return < -zone,
        SentimentLabel::Neutral => false,
        SentimentLabel::Unknown => return Verdict::Skipped,
    };
    if aligned {
        Verdict::Aligned
    } else {
        Verdict::Misaligned
    }
}

/// Shift, clamp, renormalize. `Skipped` returns the input unchanged.
pub fn update_weights<S: AsRef<str>>(
    weights: &SourceWeights,
    contributing: &[S],
    verdict: Verdict,
    alpha: f64,
) -> Result<SourceWeights> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if contributing.is_empty() {
        return Err(Error::InvalidInput("no contributing sources".into()));
    }
    if let Some(s) = contributing.iter().find(|s| !weights.contains(s.as_ref())) {
        return Err(Error::InvalidInput(format!(
            "unknown source {:?}",
            s.as_ref()
        )));
    }
    let delta = match verdict {
        Verdict::Aligned => alpha,
        Verdict::Misaligned => -alpha,
        Verdict::Skipped => return Ok(weights.clone()),
    };
    let mut next = weights.clone();
    for (name, w) in next.values_mut() {
        if contributing.iter().any(|s| s.as_ref() == name) {
            *w = (*w + delta).clamp(0.0, 1.0);
        }
    }
    next.renormalize();
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackOutcome {
    Reward,
    Penalize,
    SkippedNeutralZone,
    SkippedUnknown,
    SkippedError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub step: usize,
    pub query_id: String,
    pub predicted: Option<SentimentLabel>,
    pub next_day_return: Option<f64>,
    pub contributing_sources: Vec<String>,
    pub outcome: FeedbackOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Weight snapshots: row 0 is the starting point, row `i` follows item `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTrajectory {
    pub sources: Vec<String>,
    pub steps: Vec<Vec<f64>>,
}

impl WeightTrajectory {
    pub fn starting_at(w: &SourceWeights) -> Self {
        Self {
            sources: w.names().map(String::from).collect(),
            steps: vec![w.to_vec()],
        }
    }

    pub fn push(&mut self, w: &SourceWeights) {
        self.steps.push(w.to_vec());
    }

    pub fn initial(&self) -> &[f64] {
        &self.steps[0]
    }

    pub fn last(&self) -> &[f64] {
        self.steps.last().expect("trajectory is never empty")
    }
}

#[derive(Debug, Clone)]
pub struct EpochResult {
    pub weights: SourceWeights,
    pub events: Vec<FeedbackEvent>,
    pub records: Vec<PredictionRecord>,
    pub trajectory: WeightTrajectory,
    pub confusion: ConfusionMatrix,
}

/// One sequential pass over a date-ordered dataset, updating after each item.
/// With `alpha == 0` this is a pure evaluation and the weights are untouched.
pub fn run_feedback_epoch(
    dataset: &[LabeledHeadline],
    pipeline: &Pipeline<'_>,
    initial: SourceWeights,
    alpha: f64,
    zone: f64,
) -> Result<EpochResult> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
    }
    if zone.is_nan() || zone < 0.0 {
        return Err(Error::Config(format!(
            "neutral zone must be >= 0, got {zone}"
        )));
    }
    if let Some(pair) = dataset.windows(2).find(|p| p[1].item.date < p[0].item.date) {
        return Err(Error::InvalidInput(format!(
            "dataset not in date order at {:?}",
            pair[1].item.id
        )));
    }
    let mut weights = initial;
    let mut trajectory = WeightTrajectory::starting_at(&weights);
    let mut events = Vec::with_capacity(dataset.len());
    let mut records = Vec::with_capacity(dataset.len());

    for (step, item) in dataset.iter().enumerate() {
        let (record, outcome) = pipeline.record(item, &weights);
        let mut event = FeedbackEvent {
            step,
            query_id: item.item.id.clone(),
            predicted: record.predicted,
            next_day_return: item.next_day_return,
            contributing_sources: Vec::new(),
            outcome: FeedbackOutcome::SkippedUnknown,
            error: record.error.clone(),
        };
        match (outcome, item.next_day_return) {
            (_, _) if !item.label.is_known() => {}
            (None, _) => event.outcome = FeedbackOutcome::SkippedError,
            (Some(_), None) => {}
            (Some(out), Some(ret)) => {
                let contributing = out.retrieved.bundle.contributing_sources();
                let verdict = judge_alignment(out.prediction.label, ret, zone);
                event.outcome = match verdict {
                    Verdict::Aligned => FeedbackOutcome::Reward,
                    Verdict::Misaligned => FeedbackOutcome::Penalize,
                    Verdict::Skipped => FeedbackOutcome::SkippedNeutralZone,
                };
                if alpha > 0.0 && verdict != Verdict::Skipped && !contributing.is_empty() {
                    weights = update_weights(&weights, &contributing, verdict, alpha)?;
                }
                event.contributing_sources = contributing;
            }
        }
        trajectory.push(&weights);
        events.push(event);
        records.push(record);
    }
    let confusion = ConfusionMatrix::from_records(&records);
    Ok(EpochResult {
        weights,
        events,
        records,
        trajectory,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(pairs: &[(&str, f64)]) -> SourceWeights {
        SourceWeights::new(pairs.iter().map(|(k, v)| (k.to_string(), *v))).unwrap()
    }

    #[test]
    fn alignment_rules() {
        use SentimentLabel::*;
        assert_eq!(judge_alignment(Positive, 0.012, 0.005), Verdict::Aligned);
        assert_eq!(judge_alignment(Positive, 0.003, 0.005), Verdict::Skipped);
        assert_eq!(judge_alignment(Positive, -0.005, 0.005), Verdict::Skipped);
        assert_eq!(judge_alignment(Neutral, 0.02, 0.005), Verdict::Misaligned);
        assert_eq!(judge_alignment(Negative, -0.02, 0.005), Verdict::Aligned);
        assert_eq!(judge_alignment(Negative, 0.02, 0.005), Verdict::Misaligned);
        assert_eq!(judge_alignment(Positive, -0.02, 0.0), Verdict::Misaligned);
    }

    #[test]
    fn update_examples() {
        let out = update_weights(
            &w(&[("A", 0.5), ("B", 0.5)]),
            &["A"],
            Verdict::Aligned,
            1e-4,
        )
        .unwrap();
        assert!((out.get("A") - 0.500_05).abs() < 5e-6);
        assert!((out.get("B") - 0.499_95).abs() < 5e-6);
        assert!((out.get("A") - 0.5001 / 1.0001).abs() < 1e-15);

        let even = w(&[("A", 0.25), ("B", 0.25), ("C", 0.25), ("D", 0.25)]);
        let out = update_weights(&even, &["A", "B", "C", "D"], Verdict::Aligned, 1e-3).unwrap();
        for (_, v) in out.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }

        let out = update_weights(
            &w(&[("A", 0.00005), ("B", 0.99995)]),
            &["A"],
            Verdict::Misaligned,
            1e-4,
        )
        .unwrap();
        assert_eq!(out.get("A"), 0.0);
        assert!((out.get("B") - 1.0).abs() < 1e-15);
    }

    #[test]
    fn update_degenerate_and_errors() {
        let out = update_weights(
            &w(&[("A", 1.0), ("B", 0.0)]),
            &["A"],
            Verdict::Misaligned,
            1.0,
        )
        .unwrap();
        assert_eq!(out.to_vec(), vec![0.5, 0.5]);
        let base = w(&[("A", 1.0)]);
        assert!(update_weights(&base, &["A"], Verdict::Aligned, 0.0).is_err());
        assert!(update_weights::<&str>(&base, &[], Verdict::Aligned, 0.1).is_err());
        assert!(update_weights(&base, &["Z"], Verdict::Aligned, 0.1).is_err());
        assert_eq!(
            update_weights(&base, &["A"], Verdict::Skipped, 0.1).unwrap(),
            base
        );
    }

    fn weights_strategy() -> impl Strategy<Value = SourceWeights> {
        proptest::collection::vec(0.0f64..1.0, 2..8).prop_map(|v| {
            SourceWeights::normalized(v.into_iter().enumerate().map(|(i, x)| (format!("s{i}"), x)))
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn simplex_and_direction(
            weights in weights_strategy(),
            mask in proptest::collection::vec(any::<bool>(), 8),
            aligned in any::<bool>(),
            alpha in 1e-5f64..1e-2,
        ) {
            let names: Vec<String> = weights.names().map(String::from).collect();
            let mut contributing: Vec<&str> = names.iter().zip(&mask).filter(|(_, m)| **m).map(|(n, _)| n.as_str()).collect();
            if contributing.is_empty() {
                contributing.push(&names[0]);
            }
            let verdict = if aligned { Verdict::Aligned } else { Verdict::Misaligned };
            let out = update_weights(&weights, &contributing, verdict, alpha).unwrap();
            prop_assert!((out.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(out.iter().all(|(_, v)| (0.0..=1.0).contains(&v)));
            // Pre-normalization direction: the ratio to a non-contributor (if any) moves the right way.
            for c in &contributing {
                let before = weights.get(c);
                let pre = (before + if aligned { alpha } else { -alpha }).clamp(0.0, 1.0);
                if aligned { prop_assert!(pre >= before); } else { prop_assert!(pre <= before); }
            }
        }
    }
}
