//! Multiclass accuracy and support-weighted F1 over a 3×3 confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::SentimentLabel;
use crate::pipeline::PredictionRecord;

/// Rows are truth, columns prediction, both in [`SentimentLabel::CLASSES`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
    /// Items left out of the counts (unknown truth, pipeline or parse failures).
    pub excluded_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: SentimentLabel, predicted: SentimentLabel) {
        match (truth.class_index(), predicted.class_index()) {
            (Some(t), Some(p)) => self.counts[t][p] += 1,
            _ => self.excluded_count += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (SentimentLabel, SentimentLabel)>) -> Self {
        let mut cm = Self::default();
        for (t, p) in pairs {
            cm.add(t, p);
        }
        cm
    }

    pub fn from_records(records: &[PredictionRecord]) -> Self {
        let mut cm = Self::default();
        for r in records {
            match r.scored_pair() {
                Some((t, p)) => cm.add(t, p),
                None => cm.excluded_count += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn class_scores(&self, class: usize) -> ClassScores {
        let tp = self.counts[class][class] as f64;
        let support: u64 = self.counts[class].iter().sum();
        let predicted: u64 = (0..3).map(|r| self.counts[r][class]).sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp / predicted as f64
        };
        let recall = if support == 0 {
            0.0
        } else {
            tp / support as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            precision,
            recall,
            f1,
            support,
        }
    }
}

/// Correct / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// `Σ_c (n_c / N) · F1_c`, with `F1_c = 0` when class `c` has no true or predicted members.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    Ok((0..3)
        .map(|c| {
            let s = cm.class_scores(c);
            s.support as f64 / total as f64 * s.f1
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(counts: [[u64; 3]; 3]) -> ConfusionMatrix {
        ConfusionMatrix {
            counts,
            excluded_count: 0,
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(
            accuracy(&cm([[3, 1, 0], [0, 0, 0], [0, 0, 0]])).unwrap(),
            0.75
        );
        assert_eq!(
            accuracy(&cm([[2, 0, 0], [0, 5, 0], [0, 0, 1]])).unwrap(),
            1.0
        );
        assert_eq!(
            accuracy(&cm([[0, 2, 0], [1, 0, 0], [0, 4, 0]])).unwrap(),
            0.0
        );
        assert!(accuracy(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn weighted_f1_examples() {
        assert_eq!(
            weighted_f1(&cm([[2, 0, 0], [0, 5, 0], [0, 0, 1]])).unwrap(),
            1.0
        );
        assert_eq!(
            weighted_f1(&cm([[0, 0, 0], [0, 0, 0], [0, 0, 9]])).unwrap(),
            1.0
        );
        assert!(weighted_f1(&ConfusionMatrix::default()).is_err());
        // Positive: P=1/2 R=1/2 F=1/2; Negative: P=1 R=1/2 F=2/3; Neutral: P=1/2 R=1 F=2/3
        let m = cm([[1, 0, 1], [1, 1, 0], [0, 0, 1]]);
        let expected = 2.0 / 5.0 * 0.5 + 2.0 / 5.0 * (2.0 / 3.0) + 1.0 / 5.0 * (2.0 / 3.0);
        assert!((weighted_f1(&m).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn unknowns_are_excluded() {
        use SentimentLabel::*;
        let m = ConfusionMatrix::from_pairs([
            (Positive, Positive),
            (Unknown, Neutral),
            (Neutral, Negative),
        ]);
        assert_eq!(m.total(), 2);
        assert_eq!(m.excluded_count, 1);
    }
}
