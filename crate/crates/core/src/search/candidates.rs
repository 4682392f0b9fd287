//! The augment, encode, infer, decode, reverse loop that turns one test
//! input into a pool of merged candidate grids.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decode, LikelihoodOracle, SearchError, Strategy, DEFAULT_MAX_NEW};
use crate::augment::{apply_augmentation, reverse_candidate, AugmentationDescriptor};
use crate::encoding::{decode_target, encode_task_with_limit, EncodingError, Traversal, DEFAULT_TOKEN_LIMIT};
use crate::grid::{ColorPermutation, Grid, D4};
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub grid: Grid,
    /// Best log-likelihood seen for this grid over all views.
    #[serde(with = "crate::float_serde")]
    pub cum_log_likelihood: f64,
    /// View that produced the best log-likelihood.
    pub descriptor: AugmentationDescriptor,
    /// Number of decoded emissions that mapped back to this grid.
    pub occurrence: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub n_transforms: usize,
    pub strategy: Strategy,
    pub max_new: usize,
    pub seed: u64,
    pub fix_background: bool,
    pub token_limit: usize,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams {
            n_transforms: 18,
            strategy: Strategy::default(),
            max_new: DEFAULT_MAX_NEW,
            seed: 0,
            fix_background: true,
            token_limit: DEFAULT_TOKEN_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenerateStats {
    pub views: usize,
    /// Views whose prompt exceeded the token limit.
    pub skipped_views: usize,
    pub emissions: usize,
    pub decoded: usize,
    /// Emissions that did not parse as a grid.
    pub dropped: usize,
    /// Emissions that hit the length budget before end-of-sequence.
    pub unterminated: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub stats: GenerateStats,
}

/// Views for a task with `n_train` demonstrations. View `i` uses rigid
/// motion `i mod 8`, so all eight appear once `n >= 8`. View 0 is the
/// identity; the others also permute colors and shuffle demonstrations.
pub fn sample_views(n_train: usize, n: usize, seed: u64, fix_background: bool) -> Vec<AugmentationDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            if i == 0 {
                return AugmentationDescriptor::identity(n_train);
            }
            let mut demo_order: Vec<usize> = (0..n_train).collect();
            demo_order.shuffle(&mut rng);
            AugmentationDescriptor {
                rigid: D4::ALL[i % 8],
                colors: ColorPermutation::random(&mut rng, fix_background),
                demo_order,
            }
        })
        .collect()
}

struct ViewOutcome {
    skipped: bool,
    emissions: usize,
    unterminated: usize,
    dropped: usize,
    grids: Vec<(Grid, f64)>,
}

/// Decodes test pair `test_index` of `task` under `params.n_transforms`
/// views in parallel and merges identical grids. Merging keeps the best
/// log-likelihood and counts occurrences; candidates are listed in order of
/// first appearance across views.
pub fn generate_candidates<O: LikelihoodOracle + ?Sized>(
    oracle: &O,
    task: &Task,
    test_index: usize,
    params: &GenerateParams,
) -> Result<CandidateSet, SearchError> {
    if params.n_transforms == 0 {
        return Err(SearchError::BadParams("n_transforms must be at least 1".into()));
    }
    let views = sample_views(task.train.len(), params.n_transforms, params.seed, params.fix_background);
    let outcomes: Vec<ViewOutcome> = views
        .par_iter()
        .enumerate()
        .map(|(i, view)| run_view(oracle, task, test_index, view, i, params))
        .collect::<Result<_, _>>()?;

    let mut set = CandidateSet::default();
    set.stats.views = views.len();
    let mut index: HashMap<Grid, usize> = HashMap::new();
    for (view, o) in views.iter().zip(outcomes) {
        set.stats.skipped_views += o.skipped as usize;
        set.stats.emissions += o.emissions;
        set.stats.unterminated += o.unterminated;
        set.stats.dropped += o.dropped;
        set.stats.decoded += o.grids.len();
        for (grid, ll) in o.grids {
            match index.get(&grid) {
                Some(&k) => {
                    let c = &mut set.candidates[k];
                    c.occurrence += 1;
                    if ll > c.cum_log_likelihood {
                        c.cum_log_likelihood = ll;
                        c.descriptor = view.clone();
                    }
                }
                None => {
                    index.insert(grid.clone(), set.candidates.len());
                    set.candidates.push(Candidate {
                        grid,
                        cum_log_likelihood: ll,
                        descriptor: view.clone(),
                        occurrence: 1,
                    });
                }
            }
        }
    }
    Ok(set)
}

fn run_view<O: LikelihoodOracle + ?Sized>(
    oracle: &O,
    task: &Task,
    test_index: usize,
    view: &AugmentationDescriptor,
    i: usize,
    params: &GenerateParams,
) -> Result<ViewOutcome, SearchError> {
    let mut out = ViewOutcome {
        skipped: false,
        emissions: 0,
        unterminated: 0,
        dropped: 0,
        grids: vec![],
    };
    let aug = apply_augmentation(task, view);
    let enc = match encode_task_with_limit(&aug, Traversal::RowByRow, test_index, params.token_limit) {
        Ok(e) => e,
        Err(EncodingError::PromptTooLong { .. }) => {
            out.skipped = true;
            return Ok(out);
        }
        Err(e) => return Err(SearchError::BadParams(e.to_string())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let hyps = decode(oracle, &enc.prompt.tokens, &params.strategy, params.max_new, &mut rng)?;
    for h in hyps {
        out.emissions += 1;
        out.unterminated += !h.terminated as usize;
        match decode_target(&h.tokens, Traversal::RowByRow) {
            Ok(g) => out.grids.push((reverse_candidate(&g, view), h.log_prob)),
            Err(_) => out.dropped += 1,
        }
    }
    Ok(out)
}

/// Everything decoded for one task, one entry per test pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDump {
    pub task_id: String,
    pub tests: Vec<CandidateSet>,
}

/// Writes `{dir}/{task_id}.json`.
pub fn write_candidates(dir: &Path, dump: &CandidateDump) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.json", dump.task_id));
    let text = serde_json::to_string_pretty(dump).map_err(io::Error::other)?;
    fs::write(&path, text)?;
    Ok(path)
}

pub fn read_candidates(path: &Path) -> io::Result<CandidateDump> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
