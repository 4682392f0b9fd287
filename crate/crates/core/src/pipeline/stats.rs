use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::grid::Grid;
use crate::select::{accuracy_histogram, pass_at_k, Outcome};
use crate::task::Task;

pub const HISTOGRAM_BINS: usize = 10;

/// Evaluation of a predictions file against known answers, one unit per
/// test input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub tests: usize,
    /// `(k, pass@k)` for k = 1..=5.
    pub pass_at_k: Vec<(usize, f64)>,
    /// Best-attempt pixel accuracy counts in ten bins over [0, 1].
    pub histogram: Vec<usize>,
    pub mean_pixel_accuracy: f64,
}

impl StatsReport {
    /// Plain-text tables: pass@k, then the accuracy histogram.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "k (number of attempts) | pass@k (%)").unwrap();
        writeln!(s, "-----------------------+-----------").unwrap();
        for (k, v) in &self.pass_at_k {
            writeln!(s, "{k:>22} | {v:>9.2}").unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "pixel accuracy | tests | share (%)").unwrap();
        writeln!(s, "---------------+-------+----------").unwrap();
        let n = self.tests.max(1) as f64;
        for (i, c) in self.histogram.iter().enumerate() {
            let lo = i as f64 / HISTOGRAM_BINS as f64;
            let hi = (i + 1) as f64 / HISTOGRAM_BINS as f64;
            let close = if i + 1 == HISTOGRAM_BINS { ']' } else { ')' };
            writeln!(s, "  [{lo:.1}, {hi:.1}{close}   | {c:>5} | {:>8.2}", 100.0 * *c as f64 / n).unwrap();
        }
        writeln!(s, "\nmean pixel accuracy: {:.4} over {} tests", self.mean_pixel_accuracy, self.tests).unwrap();
        s
    }
}

/// Scores `predictions` (task id to per-test ranked attempts) against the
/// test outputs of `truths`. The two must cover the same task ids and test
/// counts.
pub fn evaluate_predictions(
    predictions: &BTreeMap<String, Vec<Vec<Grid>>>,
    truths: &[Task],
) -> Result<StatsReport, PipelineError> {
    let truth_ids: BTreeSet<&str> = truths.iter().map(|t| t.id.as_str()).collect();
    let pred_ids: BTreeSet<&str> = predictions.keys().map(String::as_str).collect();
    if truth_ids != pred_ids {
        let missing: Vec<&str> = truth_ids.difference(&pred_ids).copied().collect();
        let extra: Vec<&str> = pred_ids.difference(&truth_ids).copied().collect();
        return Err(PipelineError::IdMismatch(format!(
            "missing predictions {missing:?}, unknown ids {extra:?}"
        )));
    }
    let mut outcomes = Vec::new();
    for t in truths {
        let tests = &predictions[&t.id];
        if tests.len() != t.test.len() {
            return Err(PipelineError::IdMismatch(format!(
                "{}: {} predicted tests, {} expected",
                t.id,
                tests.len(),
                t.test.len()
            )));
        }
        for (i, (pair, attempts)) in t.test.iter().zip(tests).enumerate() {
            let truth = pair
                .output
                .clone()
                .ok_or_else(|| PipelineError::IdMismatch(format!("{} test {i} has no answer", t.id)))?;
            outcomes.push(Outcome {
                attempts: attempts.clone(),
                truth,
            });
        }
    }
    let acc: Vec<f64> = outcomes.iter().map(Outcome::best_pixel_accuracy).collect();
    Ok(StatsReport {
        tests: outcomes.len(),
        pass_at_k: (1..=5).map(|k| (k, pass_at_k(&outcomes, k))).collect(),
        histogram: accuracy_histogram(&acc, HISTOGRAM_BINS),
        mean_pixel_accuracy: if acc.is_empty() {
            0.0
        } else {
            acc.iter().sum::<f64>() / acc.len() as f64
        },
    })
}
