//! pass@k and pixel-accuracy report for a predictions file.

use std::collections::BTreeMap;

use arcflow::pipeline::evaluate_predictions;
use arcflow::task::{parse_predictions, parse_task};

fn main() {
    let truths = vec![
        parse_task(r#"{"train":[{"input":[[1]],"output":[[2]]}],"test":[{"input":[[1,1]],"output":[[2,2]]}]}"#, "a").unwrap(),
        parse_task(r#"{"train":[{"input":[[3]],"output":[[4]]}],"test":[{"input":[[3,0]],"output":[[4,0]]}]}"#, "b").unwrap(),
    ];
    let predictions: BTreeMap<_, _> = parse_predictions(
        r#"{"a": [{"attempt_1": [[2,2]], "attempt_2": [[1,1]]}],
            "b": [{"attempt_1": [[3,0]], "attempt_2": [[4,4]], "attempt_3": [[4,0]]}]}"#,
    )
    .unwrap();
    let report = evaluate_predictions(&predictions, &truths).unwrap();
    print!("{}", report.to_table());
}
