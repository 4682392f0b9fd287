use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{apply_augmentation, AugmentationDescriptor};
use crate::encoding::Traversal;
use crate::grid::{ColorPermutation, D4};
use crate::task::{GridPair, Task};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TttError {
    #[error("no augmentation source enabled")]
    NoAugmentation,
    #[error("at least one traversal is required")]
    NoTraversal,
    #[error("task {id} has {found} train pairs, leave-one-out needs at least 2")]
    TooFewDemos { id: String, found: usize },
}

/// Settings for the per-task adaptation dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TttConfig {
    apply_all_rigids: bool,
    n_color_permutations: usize,
    reorder_demos: bool,
    traversals: Vec<Traversal>,
    seed: u64,
}

impl TttConfig {
    pub fn new(
        apply_all_rigids: bool,
        n_color_permutations: usize,
        reorder_demos: bool,
        traversals: Vec<Traversal>,
        seed: u64,
    ) -> Result<Self, TttError> {
        if !apply_all_rigids && n_color_permutations == 0 && !reorder_demos {
            return Err(TttError::NoAugmentation);
        }
        if traversals.is_empty() {
            return Err(TttError::NoTraversal);
        }
        Ok(TttConfig {
            apply_all_rigids,
            n_color_permutations,
            reorder_demos,
            traversals,
            seed,
        })
    }

    /// All eight rigid motions, no colors, no reordering, row-by-row only.
    pub fn rigids_only(seed: u64) -> Self {
        TttConfig {
            apply_all_rigids: true,
            n_color_permutations: 0,
            reorder_demos: false,
            traversals: vec![Traversal::RowByRow],
            seed,
        }
    }

    pub fn n_color_permutations(&self) -> usize {
        self.n_color_permutations
    }

    pub fn traversals(&self) -> &[Traversal] {
        &self.traversals
    }

    fn rigids(&self) -> &'static [D4] {
        if self.apply_all_rigids {
            &D4::ALL
        } else {
            &D4::ALL[..1]
        }
    }

    /// Number of tasks [`build_ttt_dataset`] emits for `n_train` train pairs.
    pub fn expected_len(&self, n_train: usize) -> usize {
        n_train * self.rigids().len() * self.n_color_permutations.max(1) * self.traversals.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedTask {
    #[serde(with = "task_json")]
    pub task: Task,
    pub descriptor: AugmentationDescriptor,
    pub traversal: Traversal,
    /// Index of the original train pair promoted to test.
    pub held_out: usize,
}

mod task_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::task::{parse_task, write_task, Task};

    #[derive(Serialize, Deserialize)]
    struct Wrapped {
        id: String,
        task: serde_json::Value,
    }

    pub fn serialize<S: Serializer>(t: &Task, s: S) -> Result<S::Ok, S::Error> {
        let value: serde_json::Value = serde_json::from_str(&write_task(t)).map_err(serde::ser::Error::custom)?;
        Wrapped {
            id: t.id.clone(),
            task: value,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Task, D::Error> {
        let w = Wrapped::deserialize(d)?;
        parse_task(&w.task.to_string(), &w.id).map_err(serde::de::Error::custom)
    }
}

/// Leave-one-out split: for every train index `i`, a task whose test pair is
/// train pair `i` and whose train pairs are the others.
pub fn leave_one_out(task: &Task) -> Result<Vec<Task>, TttError> {
    if task.train.len() < 2 {
        return Err(TttError::TooFewDemos {
            id: task.id.clone(),
            found: task.train.len(),
        });
    }
    Ok((0..task.train.len())
        .map(|i| Task {
            id: format!("{}-loo{i}", task.id),
            train: task
                .train
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect::<Vec<GridPair>>(),
            test: vec![task.train[i].clone()],
        })
        .collect())
}

/// Builds the test-time adaptation set for one task: every leave-one-out
/// split expanded by the configured rigid motions, color permutations,
/// demonstration shuffles and traversals. Deterministic for a fixed seed.
pub fn build_ttt_dataset(task: &Task, cfg: &TttConfig) -> Result<Vec<AugmentedTask>, TttError> {
    let bases = leave_one_out(task)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.expected_len(task.train.len()));
    for (held_out, base) in bases.iter().enumerate() {
        let palettes: Vec<ColorPermutation> = if cfg.n_color_permutations == 0 {
            vec![ColorPermutation::identity()]
        } else {
            let mut seen = Vec::new();
            while seen.len() < cfg.n_color_permutations {
                let p = ColorPermutation::random(&mut rng, true);
                if !p.is_identity() && !seen.contains(&p) {
                    seen.push(p);
                }
            }
            seen
        };
        for &rigid in cfg.rigids() {
            for (ci, colors) in palettes.iter().enumerate() {
                let mut demo_order: Vec<usize> = (0..base.train.len()).collect();
                if cfg.reorder_demos {
                    demo_order.shuffle(&mut rng);
                }
                let descriptor = AugmentationDescriptor {
                    rigid,
                    colors: colors.clone(),
                    demo_order,
                };
                let mut augmented = apply_augmentation(base, &descriptor);
                for &traversal in &cfg.traversals {
                    augmented.id = format!(
                        "{}-{}-c{ci}-{}",
                        base.id,
                        rigid.name(),
                        match traversal {
                            Traversal::RowByRow => "rbr",
                            Traversal::Snake => "snk",
                        }
                    );
                    out.push(AugmentedTask {
                        task: augmented.clone(),
                        descriptor: descriptor.clone(),
                        traversal,
                        held_out,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn task_with(n: usize) -> Task {
        let pairs = (0..n)
            .map(|i| {
                let a = Grid::new(2, 3, (0..6).map(|k| ((k + i) % 10) as u8).collect()).unwrap();
                let b = Grid::new(1, 2, vec![i as u8, 9]).unwrap();
                GridPair::new(a, b)
            })
            .collect();
        Task::new("t", pairs, vec![GridPair::hidden(Grid::new(1, 1, vec![1]).unwrap())]).unwrap()
    }

    #[test]
    fn rigids_only_counts() {
        let cfg = TttConfig::rigids_only(0);
        let out = build_ttt_dataset(&task_with(3), &cfg).unwrap();
        assert_eq!(out.len(), 24);
        assert!(out.iter().all(|a| a.task.train.len() == 2 && a.task.test.len() == 1));
    }

    #[test]
    fn config_without_sources_is_rejected() {
        assert_eq!(
            TttConfig::new(false, 0, false, vec![Traversal::RowByRow], 0),
            Err(TttError::NoAugmentation)
        );
        assert_eq!(TttConfig::new(true, 0, false, vec![], 0), Err(TttError::NoTraversal));
    }

    #[test]
    fn too_few_demos() {
        assert!(matches!(
            build_ttt_dataset(&task_with(1), &TttConfig::rigids_only(0)),
            Err(TttError::TooFewDemos { found: 1, .. })
        ));
    }

    #[test]
    fn held_out_pair_becomes_test_and_descriptor_inverts() {
        let task = task_with(4);
        let cfg = TttConfig::new(true, 2, true, vec![Traversal::RowByRow, Traversal::Snake], 9).unwrap();
        let out = build_ttt_dataset(&task, &cfg).unwrap();
        assert_eq!(out.len(), cfg.expected_len(4));
        assert_eq!(out.len(), 4 * 8 * 2 * 2);
        for a in &out {
            let back = apply_augmentation(&a.task, &a.descriptor.inverse());
            assert_eq!(back.test[0], task.train[a.held_out]);
            let mut rest: Vec<_> = task.train.clone();
            rest.remove(a.held_out);
            assert_eq!(back.train, rest);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let task = task_with(3);
        let cfg = TttConfig::new(true, 3, true, vec![Traversal::RowByRow], 5).unwrap();
        assert_eq!(build_ttt_dataset(&task, &cfg).unwrap(), build_ttt_dataset(&task, &cfg).unwrap());
    }

    #[test]
    fn serializes_to_json() {
        let out = build_ttt_dataset(&task_with(2), &TttConfig::rigids_only(0)).unwrap();
        let json = serde_json::to_string(&out).unwrap();
        let back: Vec<AugmentedTask> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out);
    }
}
