//! Serializes a task into the token stream the model reads, both traversals.

use arcflow::encoding::{
    decode_target, encode_task, make_ul2_example, prompt_token_count, render, Traversal, Ul2Mode, Ul2Params,
};
use arcflow::task::parse_task;
use rand::SeedableRng;

const TASK: &str = r#"{
  "train": [{"input": [[1, 2], [3, 4]], "output": [[5, 6]]}],
  "test": [{"input": [[4, 3], [2, 1]], "output": [[6, 5]]}]
}"#;

fn main() {
    let task = parse_task(TASK, "tiny").expect("valid task");
    println!("prompt length: {} tokens", prompt_token_count(&task, 0));

    for t in [Traversal::RowByRow, Traversal::Snake] {
        let enc = encode_task(&task, t, 0).expect("fits the budget");
        println!("\n{t:?} prompt:\n{}", render(&enc.prompt.tokens));
        let target = enc.target.expect("test output known");
        println!("{t:?} target:\n{}", render(&target.tokens));
        // The decoder side is just the inverse.
        let back = decode_target(&target.tokens, t).unwrap();
        assert_eq!(Some(&back), task.test[0].output.as_ref());
    }

    // Denoising pretraining pairs mask spans of the same stream.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let ex = make_ul2_example(&task, Ul2Params::new(Ul2Mode::R, 0.15), &mut rng).unwrap();
    println!("\nmasked source:\n{}", render(&ex.masked_prompt.tokens));
    println!("span targets:\n{}", render(&ex.target.tokens));
}
