//! The whole solver on a small generated dataset, written to a temp dir.
//! Pass `--oracle toy:memorizer` (or any other spec) to swap the model.

use arcflow::pipeline::{run_pipeline, PipelineConfig};
use arcflow::task::{write_dataset, GridPair};
use arcflow::{Grid, Task};
use rand::{Rng, SeedableRng};

fn main() {
    let oracle = std::env::args()
        .skip_while(|a| a != "--oracle")
        .nth(1)
        .unwrap_or_else(|| "toy:matrix".into());

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let tasks: Vec<Task> = (0..6)
        .map(|k| {
            let mut pair = || {
                let (h, w) = (rng.gen_range(2..5), rng.gen_range(2..5));
                let cells: Vec<u8> = (0..h * w).map(|_| [0, 1, 3][rng.gen_range(0..3)]).collect();
                let i = Grid::new(h, w, cells).unwrap();
                GridPair::new(i.clone(), i.map_cells(|c| if c == 1 { 2 } else { c }))
            };
            let train = vec![pair(), pair(), pair()];
            Task::new(format!("task{k}"), train, vec![pair()]).unwrap()
        })
        .collect();

    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("data"), &tasks).unwrap();
    let mut cfg = PipelineConfig {
        dataset_dir: dir.path().join("data"),
        output_dir: dir.path().join("run"),
        oracle,
        workers: 4,
        ..PipelineConfig::default()
    };
    cfg.decoding_strategy.n_transforms = 8;
    println!("config:\n{}", cfg.to_yaml());

    let out = run_pipeline(&cfg).unwrap();
    let s = &out.stats;
    println!("upper bound {:.1}% -> {:.1}% after filtering", s.upper_bound_before_filter, s.upper_bound_after_filter);
    println!("final pass@{} {:.1}%", s.n_attempts, s.final_score);
    println!("pass@k {:?}", s.pass_at_k);
    println!("stage seconds {:?}", s.stage_seconds);
    println!("{}", out.submission.to_json());
}
