//! Weight trajectory as long-format CSV plus an initial/final summary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::WeightTrajectory;

/// Final weights below this are reported as effectively dropped.
pub const ZERO_FLAG_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub source: String,
    pub initial: f64,
    pub r#final: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub steps: usize,
    pub flag_threshold: f64,
    pub sources: Vec<SourceSummary>,
}

impl WeightSummary {
    pub fn flagged(&self) -> impl Iterator<Item = &str> {
        self.sources
            .iter()
            .filter(|s| s.flagged)
            .map(|s| s.source.as_str())
    }

    /// One line per source, e.g. `Business Standard: 15.23% -> 18.02%`.
    pub fn render_text(&self) -> String {
        self.sources
            .iter()
            .map(|s| {
                let mark = if s.flagged { "  [near zero]" } else { "" };
                format!(
                    "{}: {:.2}% -> {:.2}%{mark}\n",
                    s.source,
                    s.initial * 100.0,
                    s.r#final * 100.0
                )
            })
            .collect()
    }
}

/// Returns the `step,source,weight` CSV and the summary.
pub fn emit_weight_plot_data(trajectory: &WeightTrajectory) -> Result<(String, WeightSummary)> {
    if trajectory.steps.is_empty() {
        return Err(Error::Empty("weight trajectory"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "source", "weight"])?;
    for (step, row) in trajectory.steps.iter().enumerate() {
        for (source, weight) in trajectory.sources.iter().zip(row) {
            w.write_record([step.to_string(), source.clone(), weight.to_string()])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let csv = String::from_utf8(bytes).expect("csv output is utf-8");

    let sources = trajectory
        .sources
        .iter()
        .zip(trajectory.initial().iter().zip(trajectory.last()))
        .map(|(source, (&initial, &last))| SourceSummary {
            source: source.clone(),
            initial,
            r#final: last,
            flagged: last < ZERO_FLAG_THRESHOLD,
        })
        .collect();
    Ok((
        csv,
        WeightSummary {
            steps: trajectory.steps.len() - 1,
            flag_threshold: ZERO_FLAG_THRESHOLD,
            sources,
        },
    ))
}
