use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Fraction of matching cells; 0 when the shapes differ.
pub fn pixel_accuracy(pred: &Grid, truth: &Grid) -> f64 {
    if pred.dims() != truth.dims() {
        return 0.0;
    }
    let same = pred.cells().iter().zip(truth.cells()).filter(|(a, b)| a == b).count();
    same as f64 / truth.cells().len() as f64
}

/// Ranked attempts for one test input, with its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub attempts: Vec<Grid>,
    pub truth: Grid,
}

impl Outcome {
    pub fn solved_at(&self, k: usize) -> bool {
        self.attempts.iter().take(k).any(|a| *a == self.truth)
    }

    /// Accuracy of the best attempt, 0 when there are none.
    pub fn best_pixel_accuracy(&self) -> f64 {
        self.attempts
            .iter()
            .map(|a| pixel_accuracy(a, &self.truth))
            .fold(0.0, f64::max)
    }
}

/// Percentage of outcomes solved within the first `k` attempts.
///
/// # Panics
/// If `k == 0`.
pub fn pass_at_k(outcomes: &[Outcome], k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    if outcomes.is_empty() {
        return 0.0;
    }
    let solved = outcomes.iter().filter(|o| o.solved_at(k)).count();
    100.0 * solved as f64 / outcomes.len() as f64
}

/// Percentage of outcomes whose truth appears anywhere among the attempts.
pub fn upper_bound(outcomes: &[Outcome]) -> f64 {
    pass_at_k(outcomes, usize::MAX)
}

/// Counts of accuracies in `bins` equal-width bins over [0, 1]; the last
/// bin is closed so that 1.0 lands in it.
pub fn accuracy_histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    if bins == 0 {
        return h;
    }
    for &v in values {
        let i = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        h[i] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(rows: &[&[u8]]) -> Grid {
        Grid::from_rows(rows).unwrap()
    }

    #[test]
    fn pixel_accuracy_cases() {
        let t = g(&[&[1, 2], &[3, 4]]);
        assert_eq!(pixel_accuracy(&t, &t), 1.0);
        assert_eq!(pixel_accuracy(&g(&[&[1, 2], &[3, 0]]), &t), 0.75);
        assert_eq!(pixel_accuracy(&g(&[&[1, 2]]), &t), 0.0);
    }

    #[test]
    fn pass_at_k_counts() {
        let a = g(&[&[1]]);
        let b = g(&[&[2]]);
        let outcomes = vec![
            Outcome {
                attempts: vec![a.clone(), b.clone()],
                truth: a.clone(),
            },
            Outcome {
                attempts: vec![a.clone(), b.clone()],
                truth: b.clone(),
            },
            Outcome {
                attempts: vec![],
                truth: b.clone(),
            },
            Outcome {
                attempts: vec![a.clone()],
                truth: b,
            },
        ];
        assert_eq!(pass_at_k(&outcomes, 1), 25.0);
        assert_eq!(pass_at_k(&outcomes, 2), 50.0);
        assert_eq!(upper_bound(&outcomes), 50.0);
        assert_eq!(pass_at_k(&[], 1), 0.0);
    }

    #[test]
    fn synthetic_177_fixture() {
        // 62 of 177 solved on the first attempt.
        let a = g(&[&[1]]);
        let b = g(&[&[2]]);
        let outcomes: Vec<Outcome> = (0..177)
            .map(|i| Outcome {
                attempts: vec![if i < 62 { a.clone() } else { b.clone() }],
                truth: a.clone(),
            })
            .collect();
        assert!((pass_at_k(&outcomes, 1) - 35.028).abs() < 1e-3);
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(accuracy_histogram(&[1.0, 1.0], 10)[9], 2);
        assert_eq!(accuracy_histogram(&[0.0, 0.05, 0.1], 10)[..2], [2, 1]);
    }

    proptest! {
        #[test]
        fn pass_at_k_is_monotone(hits in proptest::collection::vec(0usize..6, 0..30)) {
            let truth = g(&[&[1]]);
            let outcomes: Vec<Outcome> = hits.iter().map(|&h| Outcome {
                attempts: (0..5).map(|j| if j == h { truth.clone() } else { g(&[&[0]]) }).collect(),
                truth: truth.clone(),
            }).collect();
            for k in 1..6 {
                prop_assert!(pass_at_k(&outcomes, k) <= pass_at_k(&outcomes, k + 1));
            }
        }
    }
}
