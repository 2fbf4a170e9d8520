//! Sequential environment over dated sentiment tasks.
//!
//! The agent's action is a full weight vector for the next item. The state is the
//! weight vector in force plus a small feature block.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::LabeledHeadline;
use crate::pipeline::Pipeline;
use crate::retrieval::Polarity;
use crate::seed::rng;
use crate::weights::SourceWeights;

/// Version tag for the feature layout below; bump when it changes.
pub const FEATURE_SET_VERSION: u32 = 1;
/// Rolling accuracy, three cue-polarity flags, episode progress.
pub const FEATURE_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Length of the rolling accuracy window.
    pub accuracy_window: usize,
    /// When set, items whose next-day return lies within ±zone yield no reward.
    pub reward_neutral_zone: Option<f64>,
    /// Start each episode at a seeded random offset instead of the first item.
    pub random_start: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            accuracy_window: 20,
            reward_neutral_zone: None,
            random_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub weights: Vec<f64>,
    pub features: Vec<f64>,
}

impl EnvState {
    /// Network input: weights followed by features.
    pub fn observation(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.features);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector {
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ActionVector {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let weights = softmax(&logits);
        Self { logits, weights }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    /// `None` for skipped items (unknown truth, neutral zone, pipeline error).
    pub reward: Option<f64>,
    pub done: bool,
    pub query_id: String,
    pub error: Option<String>,
}

pub struct SourceWeightEnv<'a> {
    dataset: &'a [LabeledHeadline],
    pipeline: &'a Pipeline<'a>,
    initial: SourceWeights,
    config: EnvConfig,
    pointer: usize,
    start: usize,
    weights: Vec<f64>,
    history: VecDeque<bool>,
}

impl<'a> SourceWeightEnv<'a> {
    pub fn new(
        dataset: &'a [LabeledHeadline],
        pipeline: &'a Pipeline<'a>,
        initial: SourceWeights,
        config: EnvConfig,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty("environment dataset"));
        }
        if config.accuracy_window == 0 {
            return Err(Error::Config("accuracy_window must be positive".into()));
        }
        let weights = initial.to_vec();
        Ok(Self {
            dataset,
            pipeline,
            initial,
            config,
            pointer: 0,
            start: 0,
            weights,
            history: VecDeque::new(),
        })
    }

    pub fn n_sources(&self) -> usize {
        self.initial.len()
    }

    pub fn observation_dim(&self) -> usize {
        self.n_sources() + FEATURE_DIM
    }

    pub fn sources(&self) -> &SourceWeights {
        &self.initial
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn reset(&mut self, seed: u64) -> EnvState {
        self.start = if self.config.random_start {
            rng(seed).random_range(0..self.dataset.len())
        } else {
            0
        };
        self.pointer = 0;
        self.weights = self.initial.to_vec();
        self.history.clear();
        self.state()
    }

    fn current(&self) -> &LabeledHeadline {
        &self.dataset[(self.start + self.pointer) % self.dataset.len()]
    }

    pub fn state(&self) -> EnvState {
        let accuracy = if self.history.is_empty() {
            0.0
        } else {
            self.history.iter().filter(|&&c| c).count() as f64 / self.history.len() as f64
        };
        let mut cue = [0.0; 3];
        if self.pointer < self.dataset.len() {
            let text = &self.current().item.headline;
            match self.pipeline.retriever.lexicon.dominant(text) {
                Some(Polarity::Positive) => cue[0] = 1.0,
                Some(Polarity::Negative) => cue[1] = 1.0,
                Some(Polarity::Neutral) => cue[2] = 1.0,
                None => {}
            }
        }
        let progress = self.pointer as f64 / self.dataset.len() as f64;
        let mut features = Vec::with_capacity(FEATURE_DIM);
        features.push(accuracy);
        features.extend_from_slice(&cue);
        features.push(progress);
        EnvState {
            weights: self.weights.clone(),
            features,
        }
    }

    /// Classifies the current item under `action` and advances one item.
    pub fn step(&mut self, action: &ActionVector) -> Result<StepResult> {
        if self.pointer >= self.dataset.len() {
            return Err(Error::InvalidInput(
                "step past end of episode; call reset".into(),
            ));
        }
        if action.weights.len() != self.n_sources() {
            return Err(Error::DimensionMismatch {
                left: self.n_sources(),
                right: action.weights.len(),
            });
        }
        let weights = self.initial.with_values(&action.weights)?;
        let item = self.current();
        let query_id = item.item.id.clone();
        let in_zone = match (self.config.reward_neutral_zone, item.next_day_return) {
            (Some(zone), Some(r)) => r.abs() <= zone,
            _ => false,
        };
        let (reward, error) = if !item.label.is_known() || in_zone {
            (None, None)
        } else {
            match self.pipeline.run(item, &weights) {
                Ok(outcome) => {
                    let correct = outcome.prediction.label == item.label;
                    self.history.push_back(correct);
                    if self.history.len() > self.config.accuracy_window {
                        self.history.pop_front();
                    }
                    (Some(if correct { 1.0 } else { -1.0 }), None)
                }
                Err(e) => (None, Some(format!("{}: {e}", e.kind()))),
            }
        };
        // Skipped items leave the weights in force unchanged.
        if reward.is_some() {
            self.weights = weights.to_vec();
        }
        self.pointer += 1;
        Ok(StepResult {
            next_state: self.state(),
            reward,
            done: self.pointer >= self.dataset.len(),
            query_id,
            error,
        })
    }
}
