//! Builds the per-task adaptation set: leave-one-out splits under rigid
//! motions and color permutations, plus memory-based and image-style extras.

use arcflow::augment::{
    build_ttt_dataset, memory_augment, retrieve_similar, sample_cv_augmentation, toy_embedding, EmbeddingStore,
    MemoryMode, RetrievalParams, ThresholdMode, TttConfig,
};
use arcflow::encoding::Traversal;
use arcflow::task::parse_task;
use rand::SeedableRng;

const TASK: &str = r#"{"train": [
  {"input": [[1, 0], [0, 0]], "output": [[2, 0], [0, 0]]},
  {"input": [[0, 1], [1, 3]], "output": [[0, 2], [2, 3]]},
  {"input": [[3, 3, 1]], "output": [[3, 3, 2]]}],
 "test": [{"input": [[1, 1, 0], [3, 0, 1]]}]}"#;

const OTHER: &str = r#"{"train": [
  {"input": [[4, 0], [0, 4]], "output": [[5, 0], [0, 5]]},
  {"input": [[0, 4, 4]], "output": [[0, 5, 5]]},
  {"input": [[4]], "output": [[5]]}],
 "test": [{"input": [[4, 4]]}]}"#;

fn main() {
    let task = parse_task(TASK, "recolor").unwrap();
    let other = parse_task(OTHER, "other").unwrap();

    let cfg = TttConfig::new(true, 2, true, vec![Traversal::RowByRow, Traversal::Snake], 7).unwrap();
    let set = build_ttt_dataset(&task, &cfg).unwrap();
    println!("{} adaptation tasks (expected {})", set.len(), cfg.expected_len(task.train.len()));
    for a in set.iter().take(4) {
        println!(
            "  {:<28} rigid {:<10} colors {:?} order {:?}",
            a.task.id,
            a.descriptor.rigid.name(),
            a.descriptor.colors.mapping(),
            a.descriptor.demo_order
        );
    }

    // Memory: find a similar stored task and borrow its pairs.
    let mut store = EmbeddingStore::new(toy_embedding(&task).len());
    store.insert(other.id.clone(), &toy_embedding(&other)).unwrap();
    let params = RetrievalParams {
        threshold: 0.2,
        top_k: 3,
        mode: ThresholdMode::AbsoluteFloor,
    };
    let hits = retrieve_similar(&toy_embedding(&task), &store, &params).unwrap();
    println!("\nneighbours: {hits:?}");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for mode in MemoryMode::ALL {
        match memory_augment(&task, &other, mode, &mut rng) {
            Ok(tasks) => println!("  {:<8} {} tasks, {} test pairs each", mode.name(), tasks.len(), tasks[0].test.len()),
            Err(e) => println!("  {:<8} {e}", mode.name()),
        }
    }

    let (aug, side) = sample_cv_augmentation(&task, &mut rng).unwrap();
    let changed = aug.apply_task(&task, side).unwrap();
    println!("\nimage-style augmentation {aug:?} on {side:?}: first input now {:?}", changed.train[0].input.dims());
}
