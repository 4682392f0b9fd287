//! Candidate filtering, occurrence ranking, symmetry-aggregated
//! ("Mini-Arch") scoring, two-stage selection and evaluation metrics.

mod filter;
mod metrics;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentationDescriptor;
use crate::encoding::{encode_target, encode_task_with_limit, EncodingError, Traversal, DEFAULT_TOKEN_LIMIT};
use crate::grid::D4;
use crate::search::{Candidate, LikelihoodOracle, OracleError};
use crate::task::Task;

pub use filter::{filter_candidates, FilterConfig, FilterReport, RejectReason, TaskPriors};
pub use metrics::{accuracy_histogram, pass_at_k, pixel_accuracy, upper_bound, Outcome};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid selection parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

/// Sorts by occurrence (desc), then log-likelihood (desc), then grid.
pub fn rank_by_occurrence(cands: &[Candidate]) -> Vec<Candidate> {
    let mut v = cands.to_vec();
    v.sort_by(|a, b| {
        b.occurrence
            .cmp(&a.occurrence)
            .then_with(|| desc_f64(a.cum_log_likelihood, b.cum_log_likelihood))
            .then_with(|| a.grid.cmp(&b.grid))
    });
    v
}

/// Descending order with NaN last.
fn desc_f64(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => b.partial_cmp(&a).expect("not NaN"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    /// Sum of log-likelihoods over the scored views.
    #[serde(with = "crate::float_serde")]
    pub mini_arch_score: f64,
    pub views_scored: usize,
    /// Views whose prompt exceeded the token limit.
    pub views_skipped: usize,
}

/// Scores `cand` as the answer to test pair `test_index` by summing
/// `log p(T(y) | T(x))` over the rigid motions `views`. Views whose prompt is
/// too long are skipped and counted; if every view is skipped the score is
/// `-inf`.
pub fn mini_arch_score<O: LikelihoodOracle + ?Sized>(
    cand: &Candidate,
    task: &Task,
    test_index: usize,
    oracle: &O,
    views: &[D4],
    token_limit: usize,
) -> Result<ScoredCandidate, SelectError> {
    if views.is_empty() {
        return Err(SelectError::BadParams("at least one view is required".into()));
    }
    let mut score = 0.0;
    let mut scored = 0;
    let mut skipped = 0;
    for &t in views {
        let view = AugmentationDescriptor::rigid_only(t, task.train.len());
        let aug = crate::augment::apply_augmentation(task, &view);
        let enc = match encode_task_with_limit(&aug, Traversal::RowByRow, test_index, token_limit) {
            Ok(e) => e,
            Err(EncodingError::PromptTooLong { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let target = encode_target(&view.apply_grid(&cand.grid), Traversal::RowByRow);
        score += oracle.sequence_log_likelihood(&enc.prompt.tokens, &target)?;
        scored += 1;
    }
    if scored == 0 {
        score = f64::NEG_INFINITY;
    }
    Ok(ScoredCandidate {
        candidate: cand.clone(),
        mini_arch_score: score,
        views_scored: scored,
        views_skipped: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectParams {
    pub n_attempts: usize,
    /// Cap on how many candidates survive the occurrence stage.
    pub top_k: usize,
    pub views: Vec<D4>,
    pub token_limit: usize,
}

impl Default for SelectParams {
    fn default() -> Self {
        SelectParams {
            n_attempts: 2,
            top_k: 80,
            views: D4::ALL.to_vec(),
            token_limit: DEFAULT_TOKEN_LIMIT,
        }
    }
}

impl SelectParams {
    /// Survivors of the occurrence stage for a pool of `n`: half rounded
    /// up, at least `n_attempts`, at most `top_k`, never more than `n`.
    pub fn survivors(&self, n: usize) -> usize {
        n.div_ceil(2).max(self.n_attempts).min(self.top_k).min(n)
    }
}

/// Both stages, keeping every survivor: occurrence ranking cuts the pool,
/// then survivors are re-sorted by Mini-Arch score. Equal scores keep their
/// occurrence order.
pub fn score_survivors<O: LikelihoodOracle + ?Sized>(
    cands: &[Candidate],
    task: &Task,
    test_index: usize,
    oracle: &O,
    params: &SelectParams,
) -> Result<Vec<ScoredCandidate>, SelectError> {
    if params.n_attempts == 0 || params.top_k < params.n_attempts {
        return Err(SelectError::BadParams(format!(
            "need 1 <= n_attempts <= top_k, got {} and {}",
            params.n_attempts, params.top_k
        )));
    }
    let mut ranked = rank_by_occurrence(cands);
    ranked.truncate(params.survivors(ranked.len()));
    let mut scored: Vec<ScoredCandidate> = ranked
        .par_iter()
        .map(|c| mini_arch_score(c, task, test_index, oracle, &params.views, params.token_limit))
        .collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| desc_f64(a.mini_arch_score, b.mini_arch_score));
    Ok(scored)
}

/// The top `n_attempts` of [`score_survivors`].
pub fn two_stage_select<O: LikelihoodOracle + ?Sized>(
    cands: &[Candidate],
    task: &Task,
    test_index: usize,
    oracle: &O,
    params: &SelectParams,
) -> Result<Vec<Candidate>, SelectError> {
    let mut scored = score_survivors(cands, task, test_index, oracle, params)?;
    scored.truncate(params.n_attempts);
    Ok(scored.into_iter().map(|s| s.candidate).collect())
}
