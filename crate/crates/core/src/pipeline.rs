//! One query through retrieval and classification, plus the prediction log record.

use serde::{Deserialize, Serialize};

use crate::classifier::{Backend, Prediction};
use crate::error::Result;
use crate::marketdata::{LabeledHeadline, SentimentLabel};
use crate::retrieval::{Retrieved, Retriever};
use crate::weights::SourceWeights;

pub struct Pipeline<'a> {
    pub retriever: Retriever<'a>,
    pub backend: &'a Backend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub retrieved: Retrieved,
    pub prediction: Prediction,
}

impl Pipeline<'_> {
    pub fn run(&self, item: &LabeledHeadline, weights: &SourceWeights) -> Result<Outcome> {
        let retrieved = self.retriever.retrieve(&item.item, weights)?;
        let prediction = self.backend.predict(&retrieved.bundle, item.label)?;
        Ok(Outcome {
            retrieved,
            prediction,
        })
    }

    /// Runs one item and folds any failure into the record.
    pub fn record(
        &self,
        item: &LabeledHeadline,
        weights: &SourceWeights,
    ) -> (PredictionRecord, Option<Outcome>) {
        if !item.label.is_known() {
            return (PredictionRecord::skipped(item, None), None);
        }
        match self.run(item, weights) {
            Ok(outcome) => (
                PredictionRecord::from_outcome(item, &outcome),
                Some(outcome),
            ),
            Err(e) => (
                PredictionRecord::skipped(item, Some(format!("{}: {e}", e.kind()))),
                None,
            ),
        }
    }
}

/// One line of `predictions.jsonl` (and of the prompt audit dump).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub query_id: String,
    pub truth: SentimentLabel,
    pub predicted: Option<SentimentLabel>,
    pub raw_output: Option<String>,
    pub prompt: Option<String>,
    pub selected_ids: Vec<String>,
    pub selected_sources: Vec<String>,
    pub scores: Vec<f64>,
    pub error: Option<String>,
}

impl PredictionRecord {
    fn skipped(item: &LabeledHeadline, error: Option<String>) -> Self {
        Self {
            query_id: item.item.id.clone(),
            truth: item.label,
            predicted: None,
            raw_output: None,
            prompt: None,
            selected_ids: Vec::new(),
            selected_sources: Vec::new(),
            scores: Vec::new(),
            error,
        }
    }

    fn from_outcome(item: &LabeledHeadline, outcome: &Outcome) -> Self {
        let selected = &outcome.retrieved.bundle.selected;
        Self {
            query_id: item.item.id.clone(),
            truth: item.label,
            predicted: Some(outcome.prediction.label),
            raw_output: Some(outcome.prediction.raw_output.clone()),
            prompt: Some(outcome.retrieved.bundle.rendered_prompt.clone()),
            selected_ids: selected.iter().map(|c| c.item.id.clone()).collect(),
            selected_sources: selected.iter().map(|c| c.item.source.clone()).collect(),
            scores: selected.iter().map(|c| c.weighted_score).collect(),
            error: None,
        }
    }

    /// `(truth, prediction)` when the record counts toward metrics.
    pub fn scored_pair(&self) -> Option<(SentimentLabel, SentimentLabel)> {
        match (self.truth.is_known(), self.predicted) {
            (true, Some(p)) if p.is_known() => Some((self.truth, p)),
            _ => None,
        }
    }
}

/// Evaluates every item under fixed weights.
pub fn evaluate_static(
    dataset: &[LabeledHeadline],
    pipeline: &Pipeline<'_>,
    weights: &SourceWeights,
) -> Vec<PredictionRecord> {
    dataset
        .iter()
        .map(|item| pipeline.record(item, weights).0)
        .collect()
}
