//! Cellular automata as a source of new tasks: a hand-written two-rule
//! automaton, then sampled ones pushed through the four rewriting schemas.

use arcflow::automata::{generate_tasks_traced, Automaton, GenerationParams, Schema};
use arcflow::task::{parse_task, write_task};
use arcflow::Grid;
use rand::SeedableRng;

const SEED: &str = r#"{"train": [
  {"input": [[1,0,0,3],[0,1,3,0],[0,0,1,1],[3,0,0,0]], "output": [[2,0,0,3],[0,2,3,0],[0,0,2,2],[3,0,0,0]]},
  {"input": [[0,3,1,0,0],[1,0,0,3,0],[0,0,1,0,1]], "output": [[0,3,2,0,0],[2,0,0,3,0],[0,0,2,0,2]]}],
 "test": [{"input": [[3,1,1],[0,0,1],[1,3,0],[0,0,0]], "output": [[3,2,2],[0,0,2],[2,3,0],[0,0,0]]}]}"#;

fn main() {
    // Yellow turns cyan; black under a green upper-left neighbour turns orange.
    let ca = Automaton::parse("IF SELF=4 THEN 8\nIF ch0(-1,-1)=3 AND SELF=0 THEN 7").unwrap();
    let g = Grid::from_rows(&[[3, 0, 4], [0, 0, 3], [4, 3, 0]]).unwrap();
    println!("{}\n{:?}\n-> {:?}\n", ca.to_text(), g.to_rows(), ca.apply(&g).to_rows());

    let seed = parse_task(SEED, "seed").unwrap();
    let params = GenerationParams {
        n: 3,
        ..GenerationParams::default()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for schema in Schema::ALL {
        let made = generate_tasks_traced(&seed, schema, &params, &mut rng).expect("within budget");
        println!("schema {schema}: {} tasks", made.len());
        let first = &made[0];
        println!("  f:\n    {}", first.automaton.to_text().trim_end().replace('\n', "\n    "));
        if let Some(inv) = &first.inverse {
            println!("  inverse:\n    {}", inv.to_text().trim_end().replace('\n', "\n    "));
        }
        println!("  {}", write_task(&first.task));
    }
}
