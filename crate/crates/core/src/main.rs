use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use arcflow::automata::GenerationParams;
use arcflow::encoding::vocabulary_table;
use arcflow::pipeline::{evaluate_predictions, generate_dataset, run_pipeline, GenerateJob, PipelineConfig, PipelineError};
use arcflow::task::{load_dataset, parse_predictions};

#[derive(Parser)]
#[command(name = "arcflow", version, about = "ARC solver toolkit: generation, pipeline runs and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive new tasks from a dataset with sampled cellular automata.
    Generate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Schema number 1-4; repeat for several.
        #[arg(long = "schema", required = true)]
        schemas: Vec<u8>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        max_attempts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        workers: usize,
    },
    /// Decode, filter and score every task; write submission.json and stats.json.
    Pipeline {
        /// YAML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// toy:matrix, toy:uniform, toy:memorizer or ipc:<endpoint>.
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// pass@k and pixel-accuracy report for a predictions file.
    Stats {
        #[arg(long)]
        predictions: PathBuf,
        /// Dataset with test outputs.
        #[arg(long)]
        truths: PathBuf,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the token vocabulary.
    Vocab,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.cmd {
        Cmd::Generate {
            dataset,
            out,
            schemas,
            n,
            max_attempts,
            seed,
            workers,
        } => {
            let job = GenerateJob {
                dataset,
                out_dir: out,
                schemas,
                params: GenerationParams {
                    n,
                    max_attempts,
                    ..GenerationParams::default()
                },
                seed,
                workers,
            };
            let m = generate_dataset(&job)?;
            for (schema, count) in &m.per_schema {
                println!("schema {schema}: {count} tasks");
            }
            for e in m.entries.iter().filter(|e| e.error.is_some()) {
                eprintln!("{} schema {}: {}", e.source, e.schema, e.error.as_deref().unwrap_or_default());
            }
        }
        Cmd::Pipeline {
            config,
            dataset,
            out,
            oracle,
            workers,
            seed,
        } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            cfg.dataset_dir = dataset.unwrap_or(cfg.dataset_dir);
            cfg.output_dir = out.unwrap_or(cfg.output_dir);
            cfg.oracle = oracle.unwrap_or(cfg.oracle);
            cfg.workers = workers.unwrap_or(cfg.workers);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let r = run_pipeline(&cfg)?;
            let s = &r.stats;
            println!("tasks {} tests {} (with answers {})", s.tasks, s.tests, s.tests_with_truth);
            println!("upper bound before filter {:.2}%", s.upper_bound_before_filter);
            println!("upper bound after filter  {:.2}%", s.upper_bound_after_filter);
            println!("final score (pass@{})    {:.2}%", s.n_attempts, s.final_score);
            println!("total time {:.2}s", s.total_seconds);
            for e in &s.errors {
                eprintln!("{}: {}", e.task, e.message);
            }
            println!("{}", r.submission_path.display());
        }
        Cmd::Stats {
            predictions,
            truths,
            json,
        } => {
            let text =
                std::fs::read_to_string(&predictions).map_err(|e| PipelineError::Io(predictions.clone(), e))?;
            let preds = parse_predictions(&text)?;
            let truths = load_dataset(&truths)?;
            let report = evaluate_predictions(&preds, &truths)?;
            print!("{}", report.to_table());
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&path, text).map_err(|e| PipelineError::Io(path, e))?;
            }
        }
        Cmd::Vocab => print!("{}", vocabulary_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
