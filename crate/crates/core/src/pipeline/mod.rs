//! The end-to-end stages wired together: adaptation datasets, candidate
//! decoding, filtering, scoring and the submission, run over a dataset by a
//! pool of workers. Also dataset generation with automata and the
//! evaluation report.

mod config;
mod generate;
mod queue;
mod stats;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{build_ttt_dataset, AugmentationDescriptor, TttConfig, TttError};
use crate::encoding::{encode_task_with_limit, Traversal};
use crate::grid::{Grid, D4};
use crate::search::{
    generate_candidates, oracle_from_spec, sample_views, write_candidates, CandidateDump, CandidateSet,
    GenerateParams, LikelihoodOracle, MemorizerOracle, OracleError, TransitionOracle,
};
use crate::select::{
    filter_candidates, pass_at_k, rank_by_occurrence, score_survivors, upper_bound, FilterConfig, FilterReport,
    Outcome, ScoredCandidate, SelectParams,
};
use crate::task::{load_dataset, sort_tasks, Submission, Task, TaskError};

pub use config::{DecodingSection, FilteringSection, PipelineConfig, ScoringMethod, ScoringSection, TttSection};
pub use generate::{generate_dataset, GenerateJob, Manifest, ManifestEntry};
pub use queue::JobQueue;
pub use stats::{evaluate_predictions, StatsReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] io::Error),
    #[error(transparent)]
    Data(#[from] TaskError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("prediction ids do not match truths: {0}")]
    IdMismatch(String),
}

impl PipelineError {
    /// Process exit status: 2 usage, 3 data, 4 oracle unreachable.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::UnknownKeys(_) => 2,
            PipelineError::Oracle(OracleError::UnknownSpec(_)) => 2,
            PipelineError::Oracle(_) => 4,
            PipelineError::Io(..) | PipelineError::Data(_) | PipelineError::IdMismatch(_) => 3,
        }
    }
}

/// Seed for one named unit of work, stable across platforms and releases.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

enum OracleChoice {
    Shared(Box<dyn LikelihoodOracle>),
    /// Built per task from the task's own answers.
    Memorizer,
}

fn resolve_oracle(spec: &str) -> Result<OracleChoice, OracleError> {
    let name = spec.strip_prefix("toy:").unwrap_or(spec);
    Ok(match name {
        "memorizer" => OracleChoice::Memorizer,
        "matrix" => OracleChoice::Shared(Box::new(TransitionOracle::new())),
        _ => OracleChoice::Shared(oracle_from_spec(name)?),
    })
}

/// Wall time per stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub ttt: f64,
    pub decoding: f64,
    pub filtering: f64,
    pub scoring: f64,
    pub write: f64,
}

impl StageTimings {
    pub fn sum(&self) -> f64 {
        self.load + self.ttt + self.decoding + self.filtering + self.scoring + self.write
    }

    fn add(&mut self, o: &StageTimings) {
        self.load += o.load;
        self.ttt += o.ttt;
        self.decoding += o.decoding;
        self.filtering += o.filtering;
        self.scoring += o.scoring;
        self.write += o.write;
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let r = f();
    *slot += t.elapsed().as_secs_f64();
    r
}

#[derive(Debug, Clone, Default)]
struct TestResult {
    truth: Option<Grid>,
    generated: Vec<Grid>,
    kept: Vec<Grid>,
    /// Final order, best first.
    ranked: Vec<Grid>,
}

#[derive(Debug, Clone)]
struct TaskResult {
    id: String,
    tests: Vec<TestResult>,
    timings: StageTimings,
    busy: f64,
    error: Option<String>,
    note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNote {
    pub task: String,
    pub message: String,
}

/// The run summary written to `stats.json`. Percentages are over test
/// inputs with a known answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub tasks: usize,
    pub tests: usize,
    pub tests_with_truth: usize,
    pub workers: usize,
    pub upper_bound_before_filter: f64,
    pub upper_bound_after_filter: f64,
    /// pass@n_attempts on the submission.
    pub final_score: f64,
    pub n_attempts: usize,
    /// `(k, pass@k)` for k = 1..=5 over the final ranking.
    pub pass_at_k: Vec<(usize, f64)>,
    pub candidates_generated: usize,
    pub candidates_kept: usize,
    /// Summed over workers.
    pub stage_seconds: StageTimings,
    pub worker_busy_seconds: f64,
    pub total_seconds: f64,
    pub errors: Vec<TaskNote>,
    pub notes: Vec<TaskNote>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub submission: Submission,
    pub stats: PipelineStats,
    pub submission_path: PathBuf,
    pub stats_path: PathBuf,
}

#[derive(Serialize)]
struct FilteredDump<'a> {
    task_id: &'a str,
    tests: &'a [FilterReport],
}

#[derive(Serialize)]
struct ScoredDump<'a> {
    task_id: &'a str,
    tests: &'a [Vec<ScoredCandidate>],
}

fn write_json<T: Serialize>(dir: &Path, id: &str, value: &T) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::Io(dir.to_path_buf(), e))?;
    let path = dir.join(format!("{id}.json"));
    let text = serde_json::to_string_pretty(value).expect("dump serializes");
    fs::write(&path, text).map_err(|e| PipelineError::Io(path, e))
}

/// Runs every stage on every task of `cfg.dataset_dir` and writes
/// `submission.json` and `stats.json` under `cfg.output_dir`. Failures inside
/// a task are recorded and the task falls back to placeholder attempts; only
/// configuration, dataset and oracle-connection problems abort the run.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut load = 0.0;
    let tasks = timed(&mut load, || -> Result<Vec<Task>, PipelineError> {
        let mut tasks = load_dataset(&cfg.dataset_dir)?;
        sort_tasks(&mut tasks, cfg.sort_tasks_by, cfg.sort_tasks_order);
        Ok(tasks)
    })?;
    let oracle = resolve_oracle(&cfg.oracle)?;
    for sub in [
        &cfg.online_fine_tuning.output_dir,
        &cfg.decoding_strategy.output_dir,
        &cfg.filtering.output_dir,
        &cfg.scoring.output_dir,
    ] {
        let d = cfg.stage_dir(sub);
        fs::create_dir_all(&d).map_err(|e| PipelineError::Io(d, e))?;
    }

    let n_tasks = tasks.len();
    let results = JobQueue::new(tasks).drain(cfg.workers, |_, task| run_task(cfg, &oracle, &task));

    let mut timings = StageTimings {
        load,
        ..StageTimings::default()
    };
    let mut submission = Submission::default();
    let mut outcomes_before = Vec::new();
    let mut outcomes_after = Vec::new();
    let mut outcomes_final = Vec::new();
    let mut stats = PipelineStats {
        tasks: n_tasks,
        tests: 0,
        tests_with_truth: 0,
        workers: cfg.workers.max(1),
        upper_bound_before_filter: 0.0,
        upper_bound_after_filter: 0.0,
        final_score: 0.0,
        n_attempts: cfg.decoding_strategy.n_attempts,
        pass_at_k: vec![],
        candidates_generated: 0,
        candidates_kept: 0,
        stage_seconds: StageTimings::default(),
        worker_busy_seconds: 0.0,
        total_seconds: 0.0,
        errors: vec![],
        notes: vec![],
    };
    for r in &results {
        timings.add(&r.timings);
        stats.worker_busy_seconds += r.busy;
        if let Some(e) = &r.error {
            stats.errors.push(TaskNote {
                task: r.id.clone(),
                message: e.clone(),
            });
        }
        if let Some(n) = &r.note {
            stats.notes.push(TaskNote {
                task: r.id.clone(),
                message: n.clone(),
            });
        }
        for (i, t) in r.tests.iter().enumerate() {
            let n = cfg.decoding_strategy.n_attempts.min(t.ranked.len());
            submission.insert(&r.id, i, &t.ranked[..n]);
            stats.tests += 1;
            stats.candidates_generated += t.generated.len();
            stats.candidates_kept += t.kept.len();
            if let Some(truth) = &t.truth {
                let outcome = |attempts: &[Grid]| Outcome {
                    attempts: attempts.to_vec(),
                    truth: truth.clone(),
                };
                outcomes_before.push(outcome(&t.generated));
                outcomes_after.push(outcome(&t.kept));
                outcomes_final.push(outcome(&t.ranked));
            }
        }
    }
    stats.tests_with_truth = outcomes_final.len();
    stats.upper_bound_before_filter = upper_bound(&outcomes_before);
    stats.upper_bound_after_filter = upper_bound(&outcomes_after);
    stats.final_score = pass_at_k(&outcomes_final, cfg.decoding_strategy.n_attempts);
    stats.pass_at_k = (1..=5).map(|k| (k, pass_at_k(&outcomes_final, k))).collect();

    let submission_path = cfg.output_dir.join("submission.json");
    let stats_path = cfg.output_dir.join("stats.json");
    let mut write = 0.0;
    timed(&mut write, || {
        fs::write(&submission_path, submission.to_json()).map_err(|e| PipelineError::Io(submission_path.clone(), e))
    })?;
    timings.write += write;
    stats.stage_seconds = timings;
    stats.total_seconds = start.elapsed().as_secs_f64();
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    fs::write(&stats_path, text).map_err(|e| PipelineError::Io(stats_path.clone(), e))?;
    Ok(PipelineOutput {
        submission,
        stats,
        submission_path,
        stats_path,
    })
}

fn memorizer_for(task: &Task, cfg: &PipelineConfig, seeds: &[u64]) -> MemorizerOracle {
    let mut m = MemorizerOracle::new();
    let n_train = task.train.len();
    for (i, &seed) in seeds.iter().enumerate() {
        let mut views = sample_views(n_train, cfg.decoding_strategy.n_transforms, seed, cfg.decoding_strategy.fix_background);
        views.extend(D4::ALL.iter().map(|&r| AugmentationDescriptor::rigid_only(r, n_train)));
        for v in &views {
            let aug = crate::augment::apply_augmentation(task, v);
            if let Ok(enc) = encode_task_with_limit(&aug, Traversal::RowByRow, i, cfg.input_tokens_limit) {
                if let Some(target) = enc.target {
                    m.insert(enc.prompt.tokens, target.tokens);
                }
            }
        }
    }
    m
}

fn run_task(cfg: &PipelineConfig, choice: &OracleChoice, task: &Task) -> TaskResult {
    let began = Instant::now();
    let mut timings = StageTimings::default();
    let mut result = TaskResult {
        id: task.id.clone(),
        tests: task
            .test
            .iter()
            .map(|p| TestResult {
                truth: p.output.clone(),
                ..TestResult::default()
            })
            .collect(),
        timings,
        busy: 0.0,
        error: None,
        note: None,
    };
    let seed = derive_seed(cfg.seed, &task.id);
    let test_seeds: Vec<u64> = (0..task.test.len()).map(|i| derive_seed(seed, &format!("test{i}"))).collect();
    let hidden = task.without_test_outputs();

    let outcome = (|| -> Result<(), String> {
        let memorizer;
        let oracle: &dyn LikelihoodOracle = match choice {
            OracleChoice::Shared(o) => o.as_ref(),
            OracleChoice::Memorizer => {
                memorizer = memorizer_for(task, cfg, &test_seeds);
                &memorizer
            }
        };

        let ttt = &cfg.online_fine_tuning;
        if ttt.enabled {
            timed(&mut timings.ttt, || -> Result<(), String> {
                let tcfg = TttConfig::new(
                    ttt.apply_all_rigids,
                    ttt.n_color_permutations,
                    ttt.reorder_demos,
                    ttt.traversals.clone(),
                    seed,
                )
                .map_err(|e| e.to_string())?;
                match build_ttt_dataset(&hidden, &tcfg) {
                    Ok(set) => write_json(&cfg.stage_dir(&ttt.output_dir), &task.id, &set).map_err(|e| e.to_string()),
                    Err(e @ TttError::TooFewDemos { .. }) => {
                        result.note = Some(format!("no adaptation set: {e}"));
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                }
            })?;
        }

        let d = &cfg.decoding_strategy;
        let sets: Vec<CandidateSet> = timed(&mut timings.decoding, || {
            test_seeds
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let params = GenerateParams {
                        n_transforms: d.n_transforms,
                        strategy: d.strategy.clone(),
                        max_new: d.max_new_tokens,
                        seed: s,
                        fix_background: d.fix_background,
                        token_limit: cfg.input_tokens_limit,
                    };
                    generate_candidates(oracle, &hidden, i, &params)
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())
        })?;
        timed(&mut timings.decoding, || {
            let dump = CandidateDump {
                task_id: task.id.clone(),
                tests: sets.clone(),
            };
            write_candidates(&cfg.stage_dir(&d.output_dir), &dump).map_err(|e| e.to_string())
        })?;

        let fcfg = FilterConfig {
            nine_color_exception: cfg.filtering.nine_color_exception,
        };
        let reports: Vec<FilterReport> = timed(&mut timings.filtering, || {
            let reports: Vec<FilterReport> = sets
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    if cfg.filtering.enabled {
                        filter_candidates(&s.candidates, &hidden, i, fcfg)
                    } else {
                        FilterReport {
                            kept: s.candidates.clone(),
                            rejected: vec![],
                        }
                    }
                })
                .collect();
            let dump = FilteredDump {
                task_id: &task.id,
                tests: &reports,
            };
            write_json(&cfg.stage_dir(&cfg.filtering.output_dir), &task.id, &dump).map_err(|e| e.to_string())?;
            Ok::<_, String>(reports)
        })?;

        let select = SelectParams {
            n_attempts: d.n_attempts,
            top_k: cfg.scoring.mini_arch_top_k,
            views: D4::ALL.to_vec(),
            token_limit: cfg.input_tokens_limit,
        };
        let scored: Vec<Vec<ScoredCandidate>> = timed(&mut timings.scoring, || {
            let scored: Vec<Vec<ScoredCandidate>> = reports
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    // An empty filtered pool falls back to everything decoded.
                    let pool = if r.kept.is_empty() { &sets[i].candidates } else { &r.kept };
                    match cfg.scoring.scoring_method {
                        ScoringMethod::ScoringWithAugmentations => score_survivors(pool, &hidden, i, oracle, &select),
                        ScoringMethod::Occurrence => Ok(rank_by_occurrence(pool)
                            .into_iter()
                            .map(|c| ScoredCandidate {
                                mini_arch_score: c.cum_log_likelihood,
                                candidate: c,
                                views_scored: 0,
                                views_skipped: 0,
                            })
                            .collect()),
                    }
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let dump = ScoredDump {
                task_id: &task.id,
                tests: &scored,
            };
            write_json(&cfg.stage_dir(&cfg.scoring.output_dir), &task.id, &dump).map_err(|e| e.to_string())?;
            Ok::<_, String>(scored)
        })?;

        for (i, t) in result.tests.iter_mut().enumerate() {
            t.generated = sets[i].candidates.iter().map(|c| c.grid.clone()).collect();
            t.kept = reports[i].kept.iter().map(|c| c.grid.clone()).collect();
            t.ranked = scored[i].iter().map(|s| s.candidate.grid.clone()).collect();
        }
        Ok(())
    })();

    if let Err(e) = outcome {
        result.error = Some(e);
    }
    result.timings = timings;
    result.busy = began.elapsed().as_secs_f64();
    result
}
