use proptest::prelude::*;

use arcflow::augment::{apply_augmentation, reverse_candidate, AugmentationDescriptor};
use arcflow::encoding::{decode_target, encode_target, encode_task, prompt_grids, Traversal};
use arcflow::task::{parse_predictions, parse_task, write_task, GridPair};
use arcflow::{ColorPermutation, Grid, Submission, Task, D4};

fn grid(max_side: usize) -> impl Strategy<Value = Grid> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
        proptest::collection::vec(0u8..10, h * w).prop_map(move |cells| Grid::new(h, w, cells).unwrap())
    })
}

fn task() -> impl Strategy<Value = Task> {
    (proptest::collection::vec((grid(6), grid(6)), 1..4), grid(6), grid(6)).prop_map(|(train, ti, to)| {
        Task::new(
            "p",
            train.into_iter().map(|(i, o)| GridPair::new(i, o)).collect(),
            vec![GridPair::new(ti, to)],
        )
        .unwrap()
    })
}

fn descriptor(n_train: usize) -> impl Strategy<Value = AugmentationDescriptor> {
    (0..8usize, any::<[u8; 32]>(), any::<bool>()).prop_map(move |(r, seed, fix)| {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::from_seed(seed);
        let mut demo_order: Vec<usize> = (0..n_train).collect();
        demo_order.shuffle(&mut rng);
        AugmentationDescriptor {
            rigid: D4::ALL[r],
            colors: ColorPermutation::random(&mut rng, fix),
            demo_order,
        }
    })
}

proptest! {
    #[test]
    fn task_json_round_trip(t in task()) {
        prop_assert_eq!(parse_task(&write_task(&t), "p").unwrap(), t);
    }

    #[test]
    fn target_round_trip(g in grid(30), snake in any::<bool>()) {
        let tr = if snake { Traversal::Snake } else { Traversal::RowByRow };
        prop_assert_eq!(decode_target(&encode_target(&g, tr), tr).unwrap(), g);
    }

    #[test]
    fn prompt_grids_recover_task(t in task()) {
        let enc = encode_task(&t, Traversal::RowByRow, 0).unwrap();
        let mut expected: Vec<Grid> = t.train.iter().flat_map(|p| [p.input.clone(), p.output.clone().unwrap()]).collect();
        expected.push(t.test[0].input.clone());
        prop_assert_eq!(prompt_grids(&enc.prompt.tokens), expected);
    }

    #[test]
    fn augmentation_reverses((t, d) in task().prop_flat_map(|t| {
        let n = t.train.len();
        (Just(t), descriptor(n))
    })) {
        let aug = apply_augmentation(&t, &d);
        let truth = t.test[0].output.clone().unwrap();
        prop_assert_eq!(reverse_candidate(aug.test[0].output.as_ref().unwrap(), &d), truth);
        let back = apply_augmentation(&aug, &d.inverse());
        prop_assert_eq!(back, t);
    }

    #[test]
    fn submission_round_trip(a in grid(5), b in grid(5), c in grid(5)) {
        let mut s = Submission::default();
        s.insert("x", 0, &[a.clone(), b.clone()]);
        s.insert("x", 1, std::slice::from_ref(&c));
        let parsed = parse_predictions(&s.to_json()).unwrap();
        prop_assert_eq!(&parsed["x"][0], &vec![a, b]);
        prop_assert_eq!(&parsed["x"][1], &vec![c.clone(), c]);
    }
}
