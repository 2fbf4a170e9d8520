//! Reliability weights over news sources, kept on the probability simplex.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Ordered map `source -> weight`. Every public constructor and mutator leaves
/// the weights in `[0, 1]` summing to 1 (within [`SIMPLEX_TOLERANCE`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, f64>", into = "IndexMap<String, f64>")]
pub struct SourceWeights {
    weights: IndexMap<String, f64>,
}

impl SourceWeights {
    /// Validates that `pairs` already lie on the simplex.
    pub fn new(pairs: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut weights = IndexMap::new();
        for (name, w) in pairs {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidInput(format!(
                    "weight for {name:?} outside [0,1]: {w}"
                )));
            }
            if weights.insert(name.clone(), w).is_some() {
                return Err(Error::InvalidInput(format!("duplicate source {name:?}")));
            }
        }
        if weights.is_empty() {
            return Err(Error::Empty("source weights"));
        }
        let sum: f64 = weights.values().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Clamps each value to `[0, 1]` and rescales to sum 1. All-zero input becomes uniform.
    pub fn normalized(pairs: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut weights: IndexMap<String, f64> = IndexMap::new();
        for (name, w) in pairs {
            if w.is_nan() {
                return Err(Error::InvalidInput(format!("NaN weight for {name:?}")));
            }
            weights.insert(name, w.clamp(0.0, 1.0));
        }
        if weights.is_empty() {
            return Err(Error::Empty("source weights"));
        }
        let mut out = Self { weights };
        out.renormalize();
        Ok(out)
    }

    pub fn uniform<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let w = 1.0 / names.len() as f64;
        Self::normalized(names.into_iter().map(|n| (n, w)))
    }

    pub(crate) fn renormalize(&mut self) {
        let sum: f64 = self.weights.values().sum();
        if sum <= 0.0 || !sum.is_finite() {
            let u = 1.0 / self.weights.len() as f64;
            self.weights.values_mut().for_each(|w| *w = u);
        } else {
            self.weights.values_mut().for_each(|w| *w /= sum);
        }
    }

    /// Weight of `source`; sources not in the map weigh 0.
    pub fn get(&self, source: &str) -> f64 {
        self.weights.get(source).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, source: &str) -> bool {
        self.weights.contains_key(source)
    }

    pub fn index_of(&self, source: &str) -> Option<usize> {
        self.weights.get_index_of(source)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.weights.values().copied().collect()
    }

    /// Same source order as `self`, new values (normalized).
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                left: self.len(),
                right: values.len(),
            });
        }
        Self::normalized(self.names().map(String::from).zip(values.iter().copied()))
    }

    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Raw mutable access for crate-internal update rules, which must renormalize.
    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = (&str, &mut f64)> {
        self.weights.iter_mut().map(|(k, v)| (k.as_str(), v))
    }
}

impl TryFrom<IndexMap<String, f64>> for SourceWeights {
    type Error = Error;

    fn try_from(map: IndexMap<String, f64>) -> Result<Self> {
        Self::new(map)
    }
}

impl From<SourceWeights> for IndexMap<String, f64> {
    fn from(w: SourceWeights) -> Self {
        w.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_enforce_simplex() {
        assert!(SourceWeights::new([("a".into(), 0.5), ("b".into(), 0.4)]).is_err());
        assert!(SourceWeights::new([("a".into(), 1.5), ("b".into(), -0.5)]).is_err());
        assert!(SourceWeights::new([("a".into(), 0.5), ("a".into(), 0.5)]).is_err());
        let w = SourceWeights::normalized([("a".into(), 2.0), ("b".into(), 1.0)]).unwrap();
        assert_eq!(w.to_vec(), vec![0.5, 0.5]);
        let w = SourceWeights::normalized([("a".into(), 0.0), ("b".into(), 0.0)]).unwrap();
        assert_eq!(w.to_vec(), vec![0.5, 0.5]);
        let w = SourceWeights::uniform(["a", "b", "c", "d", "e"]).unwrap();
        assert!(w.iter().all(|(_, v)| (v - 0.2).abs() < 1e-15));
        assert_eq!(w.get("zzz"), 0.0);
    }

    #[test]
    fn serde_round_trip_keeps_order() {
        let w = SourceWeights::new([("z".into(), 0.25), ("a".into(), 0.75)]).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"z":0.25,"a":0.75}"#);
        let back: SourceWeights = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<SourceWeights>(r#"{"a":0.2}"#).is_err());
    }
}
