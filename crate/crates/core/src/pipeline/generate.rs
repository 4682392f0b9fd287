use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, JobQueue, PipelineError};
use crate::automata::{generate_tasks, AutomataError, GenerationParams, Schema};
use crate::task::{load_dataset, write_task, Task};

/// One automata generation run over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateJob {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    /// Schema numbers, 1 to 4.
    pub schemas: Vec<u8>,
    pub params: GenerationParams,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: String,
    pub schema: u8,
    pub seed: u64,
    pub wanted: usize,
    pub produced: Vec<String>,
    /// Set when the attempt budget ran out; the partial output is kept.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
    /// Tasks written per schema number.
    pub per_schema: BTreeMap<u8, usize>,
}

/// Writes up to `params.n` automaton-derived tasks per schema per source
/// task into `out_dir`, plus `manifest.json`. A source task that exhausts its
/// budget keeps what it produced and the run goes on.
pub fn generate_dataset(job: &GenerateJob) -> Result<Manifest, PipelineError> {
    let schemas: Vec<Schema> = job
        .schemas
        .iter()
        .map(|&n| Schema::from_number(n).ok_or_else(|| PipelineError::Config(format!("no schema {n}; expected 1 to 4"))))
        .collect::<Result<_, _>>()?;
    job.params
        .sample
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let tasks = load_dataset(&job.dataset)?;
    fs::create_dir_all(&job.out_dir).map_err(|e| PipelineError::Io(job.out_dir.clone(), e))?;

    let units: Vec<(Task, Schema)> = tasks
        .iter()
        .flat_map(|t| schemas.iter().map(move |&s| (t.clone(), s)))
        .collect();
    let results = JobQueue::new(units).drain(job.workers, |_, (task, schema)| {
        let seed = derive_seed(job.seed, &format!("{}/{}", task.id, schema.number()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (made, error) = match generate_tasks(&task, schema, &job.params, &mut rng) {
            Ok(v) => (v, None),
            Err(AutomataError::GenerationBudgetExhausted { produced, .. }) => {
                let e = format!("budget exhausted with {} of {}", produced.len(), job.params.n);
                (produced, Some(e))
            }
            Err(e) => (vec![], Some(e.to_string())),
        };
        (task.id, schema, seed, made, error)
    });

    let mut manifest = Manifest {
        seed: job.seed,
        entries: vec![],
        per_schema: BTreeMap::new(),
    };
    for (source, schema, seed, made, error) in results {
        for t in &made {
            let path = job.out_dir.join(format!("{}.json", t.id));
            fs::write(&path, write_task(t)).map_err(|e| PipelineError::Io(path, e))?;
        }
        *manifest.per_schema.entry(schema.number()).or_default() += made.len();
        manifest.entries.push(ManifestEntry {
            source,
            schema: schema.number(),
            seed,
            wanted: job.params.n,
            produced: made.into_iter().map(|t| t.id).collect(),
            error,
        });
    }
    let path = job.out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| PipelineError::Io(path, e))?;
    Ok(manifest)
}
