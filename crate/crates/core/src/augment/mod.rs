//! Task-level augmentations and the datasets built from them.

mod cv;
mod memory;
mod ttt;

pub use cv::{
    add_frame, add_metagrid, sample_cv_augmentation, upscale, Axis, CvAugmentation, CvError, CvTarget, Padding,
};
pub use memory::{
    memory_augment, retrieve_similar, toy_embedding, EmbeddingStore, MemoryError, MemoryMode, RetrievalParams,
    SharedEmbeddingStore, ThresholdMode,
};
pub use ttt::{build_ttt_dataset, leave_one_out, AugmentedTask, TttConfig, TttError};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{ColorPermutation, Grid, D4};
use crate::task::Task;

/// One consistent transform of a whole task: a rigid motion, a color
/// relabeling and a reordering of the demonstrations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentationDescriptor {
    pub rigid: D4,
    pub colors: ColorPermutation,
    /// `demo_order[j]` is the original index of the j-th augmented train pair.
    pub demo_order: Vec<usize>,
}

impl AugmentationDescriptor {
    pub fn identity(n_train: usize) -> Self {
        AugmentationDescriptor {
            rigid: D4::Identity,
            colors: ColorPermutation::identity(),
            demo_order: (0..n_train).collect(),
        }
    }

    pub fn rigid_only(rigid: D4, n_train: usize) -> Self {
        AugmentationDescriptor {
            rigid,
            ..Self::identity(n_train)
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_train: usize, fix_background: bool) -> Self {
        let mut demo_order: Vec<usize> = (0..n_train).collect();
        demo_order.shuffle(rng);
        AugmentationDescriptor {
            rigid: D4::ALL[rng.gen_range(0..8)],
            colors: ColorPermutation::random(rng, fix_background),
            demo_order,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rigid == D4::Identity
            && self.colors.is_identity()
            && self.demo_order.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn inverse(&self) -> Self {
        let mut order = vec![0; self.demo_order.len()];
        for (j, &i) in self.demo_order.iter().enumerate() {
            order[i] = j;
        }
        AugmentationDescriptor {
            rigid: self.rigid.inverse(),
            colors: self.colors.inverse(),
            demo_order: order,
        }
    }

    /// Transforms a single grid (rigid motion, then color relabeling).
    pub fn apply_grid(&self, g: &Grid) -> Grid {
        g.apply_rigid(self.rigid).apply_color_map(&self.colors)
    }
}

/// Applies `a` to every grid of the task and reorders the train pairs.
///
/// # Panics
/// If `a.demo_order` is not a permutation of the train indices.
pub fn apply_augmentation(task: &Task, a: &AugmentationDescriptor) -> Task {
    assert_eq!(
        a.demo_order.len(),
        task.train.len(),
        "demo order must cover every train pair"
    );
    let mapped = task.map_grids(|g| a.apply_grid(g));
    Task {
        id: task.id.clone(),
        train: a.demo_order.iter().map(|&i| mapped.train[i].clone()).collect(),
        test: mapped.test,
    }
}

/// Maps a grid predicted for the augmented task back to the original task:
/// inverse color map first, then inverse rigid motion.
pub fn reverse_candidate(grid: &Grid, a: &AugmentationDescriptor) -> Grid {
    grid.apply_color_map(&a.colors.inverse())
        .apply_rigid(a.rigid.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Color;
    use crate::task::GridPair;

    fn g(rows: &[&[u8]]) -> Grid {
        Grid::from_rows(rows).unwrap()
    }

    fn sample_task() -> Task {
        Task::new(
            "t",
            vec![
                GridPair::new(g(&[&[0, 1], &[2, 0], &[1, 1]]), g(&[&[1, 2, 0]])),
                GridPair::new(g(&[&[3]]), g(&[&[0, 3]])),
            ],
            vec![GridPair::new(g(&[&[1, 0]]), g(&[&[2], &[2]]))],
        )
        .unwrap()
    }

    #[test]
    fn identity_descriptor_is_noop() {
        let t = sample_task();
        assert_eq!(apply_augmentation(&t, &AugmentationDescriptor::identity(2)), t);
    }

    #[test]
    fn rot90_rotates_everything_and_inverts() {
        let t = sample_task();
        let a = AugmentationDescriptor::rigid_only(D4::Rot90, 2);
        let r = apply_augmentation(&t, &a);
        for (orig, new) in t.grids().zip(r.grids()) {
            assert_eq!(&orig.apply_rigid(D4::Rot90), new);
        }
        let back = apply_augmentation(&r, &AugmentationDescriptor::rigid_only(D4::Rot270, 2));
        assert_eq!(back, t);
    }

    #[test]
    fn swap_leaves_background() {
        let t = sample_task();
        let a = AugmentationDescriptor {
            colors: ColorPermutation::swap(Color::new(1).unwrap(), Color::new(2).unwrap()),
            ..AugmentationDescriptor::identity(2)
        };
        let r = apply_augmentation(&t, &a);
        for (orig, new) in t.grids().zip(r.grids()) {
            for (&o, &n) in orig.cells().iter().zip(new.cells()) {
                if o == 0 {
                    assert_eq!(n, 0);
                }
            }
        }
        assert_eq!(r.train[0].output, Some(g(&[&[2, 1, 0]])));
    }

    #[test]
    fn demo_order_and_inverse() {
        let t = sample_task();
        let a = AugmentationDescriptor {
            rigid: D4::FlipMainDiag,
            colors: ColorPermutation::swap(Color::new(0).unwrap(), Color::new(3).unwrap()),
            demo_order: vec![1, 0],
        };
        let r = apply_augmentation(&t, &a);
        assert_eq!(r.train[0].input, a.apply_grid(&t.train[1].input));
        assert_eq!(apply_augmentation(&r, &a.inverse()), t);
    }

    #[test]
    fn reverse_candidate_examples() {
        let one = g(&[&[1]]);
        assert_eq!(reverse_candidate(&one, &AugmentationDescriptor::identity(0)), one);
        let a = AugmentationDescriptor {
            rigid: D4::Rot90,
            colors: ColorPermutation::swap(Color::new(1).unwrap(), Color::new(2).unwrap()),
            demo_order: vec![],
        };
        assert_eq!(reverse_candidate(&a.apply_grid(&one), &a), one);
        let wide = g(&[&[1, 2, 3], &[4, 5, 6]]);
        assert_eq!(reverse_candidate(&a.apply_grid(&wide), &a), wide);
    }
}
