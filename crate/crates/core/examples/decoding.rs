//! Every decoding strategy on one prompt with the built-in transition
//! oracle, and how often the speculative draft is accepted.

use arcflow::encoding::{decode_target, encode_task, prompt_grids, render, Traversal};
use arcflow::search::{
    decode, speculative_decode, Strategy, TransitionMatrix, TransitionOracle, TraversalOrder,
};
use arcflow::task::parse_task;
use rand::SeedableRng;

const TASK: &str = r#"{"train": [
  {"input": [[1,0,0],[0,1,0],[0,0,1]], "output": [[2,0,0],[0,2,0],[0,0,2]]},
  {"input": [[0,1,1],[1,0,0],[0,0,1]], "output": [[0,2,2],[2,0,0],[0,0,2]]}],
 "test": [{"input": [[1,1,0],[0,0,1],[1,0,0]]}]}"#;

fn main() {
    let task = parse_task(TASK, "diag").unwrap();
    let prompt = encode_task(&task, Traversal::RowByRow, 0).unwrap().prompt.tokens;
    let oracle = TransitionOracle::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);

    let strategies = [
        Strategy::Greedy,
        Strategy::Sample { temperature: 0.7, n: 4 },
        Strategy::Beam { beams: 6, num_return: 3 },
        Strategy::Threshold {
            threshold: 0.005,
            order: TraversalOrder::Dfs,
            node_cap: 10_000,
        },
        Strategy::Entropy {
            alpha: 0.5,
            top_k_branch: 2,
            max_branches: 4,
        },
        Strategy::Speculative { k: 3, depth: 3 },
    ];
    for s in &strategies {
        let hyps = decode(&oracle, &prompt, s, 200, &mut rng).unwrap();
        println!("{s:?}: {} hypotheses", hyps.len());
        for h in hyps.iter().take(3) {
            match decode_target(&h.tokens, Traversal::RowByRow) {
                Ok(g) => println!("  {:>8.3}  {:?}", h.log_prob, g.to_rows()),
                Err(e) => println!("  {:>8.3}  undecodable ({e}): {}", h.log_prob, render(&h.tokens)),
            }
        }
    }

    let m = TransitionMatrix::from_grids(&prompt_grids(&prompt));
    let (_, stats) = speculative_decode(&oracle, &m, &prompt, 3, 3, 200).unwrap();
    println!(
        "\ndraft acceptance {:.1}%, {:.2} tokens per verification pass",
        100.0 * stats.acceptance_rate(),
        stats.speedup()
    );
}
