//! ARC task and submission files.
//!
//! Tasks use the official JSON layout: `{"train": [{"input": [[..]], "output":
//! [[..]]}, ..], "test": [..]}`. Unknown keys are ignored when reading and never
//! written back.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("malformed JSON: {0}")]
    MalformedJson(#[from] serde_json::Error),
    #[error("grid out of range in {location}: {source}")]
    GridOutOfRange {
        location: String,
        #[source]
        source: GridError,
    },
    #[error("task {id} has an empty {split} split")]
    EmptySplit { id: String, split: &'static str },
    #[error("task {id}: train pair {index} has no output")]
    MissingTrainOutput { id: String, index: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPair {
    pub input: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Grid>,
}

impl GridPair {
    pub fn new(input: Grid, output: Grid) -> Self {
        GridPair {
            input,
            output: Some(output),
        }
    }

    pub fn hidden(input: Grid) -> Self {
        GridPair {
            input,
            output: None,
        }
    }

    pub fn map(&self, f: impl Fn(&Grid) -> Grid) -> GridPair {
        GridPair {
            input: f(&self.input),
            output: self.output.as_ref().map(&f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Task {
    pub id: String,
    pub train: Vec<GridPair>,
    pub test: Vec<GridPair>,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    input: Vec<Vec<i64>>,
    #[serde(default)]
    output: Option<Vec<Vec<i64>>>,
}

#[derive(Serialize, Deserialize)]
struct RawTask {
    train: Vec<RawPair>,
    test: Vec<RawPair>,
}

#[derive(Serialize)]
struct TaskOut<'a> {
    train: &'a [GridPair],
    test: &'a [GridPair],
}

fn convert_grid(raw: Vec<Vec<i64>>, location: String) -> Result<Grid, TaskError> {
    Grid::try_from(raw).map_err(|source| TaskError::GridOutOfRange { location, source })
}

fn convert_pairs(id: &str, split: &'static str, raw: Vec<RawPair>) -> Result<Vec<GridPair>, TaskError> {
    raw.into_iter()
        .enumerate()
        .map(|(i, p)| {
            let input = convert_grid(p.input, format!("{id}/{split}[{i}].input"))?;
            let output = p
                .output
                .map(|o| convert_grid(o, format!("{id}/{split}[{i}].output")))
                .transpose()?;
            Ok(GridPair { input, output })
        })
        .collect()
}

impl Task {
    pub fn new(id: impl Into<String>, train: Vec<GridPair>, test: Vec<GridPair>) -> Result<Self, TaskError> {
        let t = Task {
            id: id.into(),
            train,
            test,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.train.is_empty() {
            return Err(TaskError::EmptySplit {
                id: self.id.clone(),
                split: "train",
            });
        }
        if self.test.is_empty() {
            return Err(TaskError::EmptySplit {
                id: self.id.clone(),
                split: "test",
            });
        }
        if let Some(index) = self.train.iter().position(|p| p.output.is_none()) {
            return Err(TaskError::MissingTrainOutput {
                id: self.id.clone(),
                index,
            });
        }
        Ok(())
    }

    /// All grids in the task: train inputs/outputs, then test inputs/outputs.
    pub fn grids(&self) -> impl Iterator<Item = &Grid> {
        self.train
            .iter()
            .chain(&self.test)
            .flat_map(|p| std::iter::once(&p.input).chain(p.output.as_ref()))
    }

    pub fn map_grids(&self, f: impl Fn(&Grid) -> Grid) -> Task {
        Task {
            id: self.id.clone(),
            train: self.train.iter().map(|p| p.map(&f)).collect(),
            test: self.test.iter().map(|p| p.map(&f)).collect(),
        }
    }

    pub fn has_test_outputs(&self) -> bool {
        self.test.iter().all(|p| p.output.is_some())
    }

    /// Copy of the task with test outputs removed.
    pub fn without_test_outputs(&self) -> Task {
        Task {
            id: self.id.clone(),
            train: self.train.clone(),
            test: self.test.iter().map(|p| GridPair::hidden(p.input.clone())).collect(),
        }
    }
}

pub fn parse_task(text: &str, id: &str) -> Result<Task, TaskError> {
    let raw: RawTask = serde_json::from_str(text)?;
    task_from_raw(raw, id)
}

fn task_from_raw(raw: RawTask, id: &str) -> Result<Task, TaskError> {
    let train = convert_pairs(id, "train", raw.train)?;
    let test = convert_pairs(id, "test", raw.test)?;
    Task::new(id, train, test)
}

pub fn write_task(t: &Task) -> String {
    serde_json::to_string(&TaskOut {
        train: &t.train,
        test: &t.test,
    })
    .expect("grids always serialize")
}

/// One task per test pair. Ids get a `-{index}` suffix when there is more than
/// one test pair; single-test tasks are returned unchanged.
pub fn split_multi_test(t: &Task) -> Vec<Task> {
    if t.test.len() == 1 {
        return vec![t.clone()];
    }
    t.test
        .iter()
        .enumerate()
        .map(|(i, pair)| Task {
            id: format!("{}-{i}", t.id),
            train: t.train.clone(),
            test: vec![pair.clone()],
        })
        .collect()
}

/// Inverse of the id convention in [`split_multi_test`].
pub fn split_id_parts(id: &str) -> (&str, usize) {
    if let Some((base, idx)) = id.rsplit_once('-') {
        if let Ok(i) = idx.parse::<usize>() {
            return (base, i);
        }
    }
    (id, 0)
}

fn io_err(path: &Path, source: std::io::Error) -> TaskError {
    TaskError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a dataset from a directory of `<id>.json` files or from a single JSON
/// object keyed by task id. Tasks come back sorted by id.
pub fn load_dataset(path: &Path) -> Result<Vec<Task>, TaskError> {
    let mut tasks = Vec::new();
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|e| io_err(path, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io_err(path, e))?;
            let p = entry.path();
            if p.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            tasks.push(parse_task(&text, &id)?);
        }
    } else {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let keyed: BTreeMap<String, RawTask> = serde_json::from_str(&text)?;
        for (id, raw) in keyed {
            tasks.push(task_from_raw(raw, &id)?);
        }
    }
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(tasks)
}

/// Writes one `<id>.json` per task.
pub fn write_dataset(dir: &Path, tasks: &[Task]) -> Result<(), TaskError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for t in tasks {
        let p = dir.join(format!("{}.json", t.id));
        fs::write(&p, write_task(t)).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

/// Writes a single keyed JSON object `{id: task}`.
pub fn write_keyed_dataset(tasks: &[Task]) -> String {
    let map: BTreeMap<&str, TaskOut<'_>> = tasks
        .iter()
        .map(|t| {
            (
                t.id.as_str(),
                TaskOut {
                    train: &t.train,
                    test: &t.test,
                },
            )
        })
        .collect();
    serde_json::to_string(&map).expect("grids always serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    Id,
    #[default]
    TotalProcessedToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Asc,
    #[default]
    Desc,
}

/// Orders tasks by id, or by total serialized token count with id as the
/// tie-break.
pub fn sort_tasks(tasks: &mut [Task], key: SortKey, order: SortOrder) {
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    if key == SortKey::TotalProcessedToken {
        let mut keyed: Vec<(usize, Task)> = tasks
            .iter()
            .map(|t| (crate::encoding::task_token_count(t), t.clone()))
            .collect();
        keyed.sort_by(|(ca, a), (cb, b)| {
            let by_count = match order {
                SortOrder::Asc => ca.cmp(cb),
                SortOrder::Desc => cb.cmp(ca),
            };
            by_count.then_with(|| a.id.cmp(&b.id))
        });
        for (slot, (_, t)) in tasks.iter_mut().zip(keyed) {
            *slot = t;
        }
    } else if order == SortOrder::Desc {
        tasks.reverse();
    }
}

/// Two attempts for one test input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempts {
    pub attempt_1: Grid,
    pub attempt_2: Grid,
}

/// Final predictions keyed by task id, one entry per test input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Submission {
    pub tasks: BTreeMap<String, Vec<Attempts>>,
}

impl Submission {
    /// Records the attempts for one test index; missing attempts fall back to
    /// the first one, or to `[[0]]` when nothing was produced.
    pub fn insert(&mut self, task_id: &str, test_index: usize, attempts: &[Grid]) {
        let fallback = Grid::new(1, 1, vec![0]).expect("1x1 grid");
        let first = attempts.first().cloned().unwrap_or(fallback);
        let second = attempts.get(1).cloned().unwrap_or_else(|| first.clone());
        let entry = self.tasks.entry(task_id.to_string()).or_default();
        if entry.len() <= test_index {
            entry.resize(
                test_index + 1,
                Attempts {
                    attempt_1: first.clone(),
                    attempt_2: second.clone(),
                },
            );
        }
        entry[test_index] = Attempts {
            attempt_1: first,
            attempt_2: second,
        };
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tasks).expect("grids always serialize")
    }
}

/// Predictions file reader tolerant to more than two attempts
/// (`attempt_1`, `attempt_2`, `attempt_3`, ...). Attempts come back in order.
pub fn parse_predictions(text: &str) -> Result<BTreeMap<String, Vec<Vec<Grid>>>, TaskError> {
    let raw: BTreeMap<String, Vec<BTreeMap<String, Grid>>> = serde_json::from_str(text)?;
    Ok(raw
        .into_iter()
        .map(|(id, tests)| {
            let tests = tests
                .into_iter()
                .map(|attempts| {
                    let mut numbered: Vec<(usize, Grid)> = attempts
                        .into_iter()
                        .filter_map(|(k, g)| {
                            k.strip_prefix("attempt_")
                                .and_then(|n| n.parse::<usize>().ok())
                                .map(|n| (n, g))
                        })
                        .collect();
                    numbered.sort_by_key(|(n, _)| *n);
                    numbered.into_iter().map(|(_, g)| g).collect()
                })
                .collect();
            (id, tests)
        })
        .collect())
}
