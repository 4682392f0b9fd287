//! From one test input to two attempts: decode under many augmented views,
//! merge, filter with priors from the demonstrations, then re-score the
//! survivors under all rigid views.

use arcflow::augment::AugmentationDescriptor;
use arcflow::search::{generate_candidates, GenerateParams, MemorizerOracle, Strategy, TransitionOracle};
use arcflow::select::{filter_candidates, rank_by_occurrence, score_survivors, FilterConfig, SelectParams};
use arcflow::task::parse_task;
use arcflow::D4;

const TASK: &str = r#"{"train": [
  {"input": [[1,0],[0,0]], "output": [[2,0],[0,0]]},
  {"input": [[0,1,1],[1,3,0]], "output": [[0,2,2],[2,3,0]]}],
 "test": [{"input": [[1,1,0],[3,0,1]], "output": [[2,2,0],[3,0,2]]}]}"#;

fn main() {
    let task = parse_task(TASK, "recolor").unwrap();
    let params = GenerateParams {
        n_transforms: 12,
        strategy: Strategy::Beam { beams: 6, num_return: 6 },
        max_new: 60,
        ..GenerateParams::default()
    };

    let set = generate_candidates(&TransitionOracle::new(), &task.without_test_outputs(), 0, &params).unwrap();
    println!("{} distinct candidates, {:?}", set.candidates.len(), set.stats);
    for c in rank_by_occurrence(&set.candidates).iter().take(3) {
        println!("  occurrence {:>2}  ll {:>7.3}  {:?}", c.occurrence, c.cum_log_likelihood, c.grid.to_rows());
    }

    let report = filter_candidates(&set.candidates, &task, 0, FilterConfig::default());
    println!(
        "filter kept {} and rejected {} ({:.0}%)",
        report.kept.len(),
        report.rejected.len(),
        100.0 * report.rejection_fraction()
    );

    // Re-score with a stand-in model that knows the answer under every
    // rigid view. The truth joins the pool ranked second by occurrence, the
    // case where occurrence alone picks wrong.
    let views: Vec<AugmentationDescriptor> =
        D4::ALL.iter().map(|&r| AugmentationDescriptor::rigid_only(r, task.train.len())).collect();
    let scorer = MemorizerOracle::for_views(&task, 0, &views);
    let mut pool = report.kept.clone();
    let truth = task.test[0].output.clone().unwrap();
    pool.retain(|c| c.grid != truth);
    let top = rank_by_occurrence(&pool)[0].clone();
    pool.push(arcflow::search::Candidate {
        grid: truth,
        occurrence: top.occurrence - 1,
        ..top
    });
    let select = SelectParams::default();
    let scored = score_survivors(&pool, &task, 0, &scorer, &select).unwrap();
    for s in scored.iter().take(3) {
        println!(
            "  score {:>9.3}  occurrence {:>2}  {:?}",
            s.mini_arch_score,
            s.candidate.occurrence,
            s.candidate.grid.to_rows()
        );
    }
}
