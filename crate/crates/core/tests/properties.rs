//! Property tests over the public API.

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rse::network::{body, build_model, ModelConfig, PositionalStructure};
use rse::numcore::{kernels, Eager, Graph, Permutation, Tensor};
use rse::shuffle::{inverse_shuffle, perfect_shuffle, rotl_index, rotr_index};
use rse::tasks::{
    add_bits, addition_example, bucket_for, mul_bits, pad_to_bucket, pad_to_length, Batch, Curriculum, LengthMode,
    Task, TaskExample, BIT0, BIT1, PAD, SEP,
};
use rse::train::{radam_rectifier, radam_rho};
use rse::units::{rsu_forward, rsu_init, swap_half, AblationFlags, Residual};

fn big(bits: &[bool]) -> BigUint {
    bits.iter().rev().fold(BigUint::from(0u8), |acc, &b| acc * 2u8 + u8::from(b))
}

fn bits_strategy(max: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 1..max)
}

proptest! {
    #[test]
    fn rotl_and_rotr_are_inverse(k in 1u32..20, a in any::<usize>()) {
        let a = a & ((1usize << k) - 1);
        prop_assert_eq!(rotr_index(rotl_index(a, k).unwrap(), k).unwrap(), a);
        prop_assert_eq!(rotl_index(rotr_index(a, k).unwrap(), k).unwrap(), a);
    }

    #[test]
    fn shuffle_moves_element_a_to_rotl_a(k in 1u32..12) {
        let n = 1usize << k;
        let x: Vec<usize> = (0..n).collect();
        let s = perfect_shuffle(&x).unwrap();
        for a in 0..n {
            prop_assert_eq!(s[rotl_index(a, k).unwrap()], a);
        }
        prop_assert_eq!(inverse_shuffle(&s).unwrap(), x);
    }

    #[test]
    fn schedule_length_law(k in 2u32..16, blocks in 1usize..4) {
        let plan = PositionalStructure::new(1 << k, blocks).unwrap();
        prop_assert_eq!(plan.switch_layers(), blocks * 2 * (k as usize - 1) + 1);
    }

    #[test]
    fn permutation_inverse_round_trip(seed in any::<u64>(), n in 1usize..64) {
        use rand::seq::SliceRandom;
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = Permutation::new(map).unwrap();
        let items: Vec<usize> = (0..n).map(|i| i * 7).collect();
        let there = p.apply(&items).unwrap();
        prop_assert_eq!(p.inverse().apply(&there).unwrap(), items);
    }

    #[test]
    fn addition_matches_bigint(a in bits_strategy(80), b in bits_strategy(80)) {
        prop_assert_eq!(big(&add_bits(&a, &b)), big(&a) + big(&b));
        let ex = addition_example(&a, &b);
        prop_assert_eq!(ex.len(), a.len() + 1 + b.len());
        prop_assert_eq!(ex.input[a.len()], SEP);
        let target: Vec<bool> = ex.target.iter().map(|&t| t == BIT1).collect();
        prop_assert!(ex.target.iter().all(|&t| t == BIT0 || t == BIT1));
        prop_assert_eq!(big(&target), big(&a) + big(&b));
    }

    #[test]
    fn multiplication_matches_bigint(a in bits_strategy(60), b in bits_strategy(60)) {
        prop_assert_eq!(big(&mul_bits(&a, &b)), big(&a) * big(&b));
    }

    #[test]
    fn generated_examples_are_consistent(seed in any::<u64>(), k in 2u32..9, which in 0usize..3, full in any::<bool>()) {
        let len = 1usize << k;
        let task = [Task::Addition, Task::Multiplication, Task::Sorting { alphabet: 5 }][which];
        let mode = if full { LengthMode::Full } else { LengthMode::Bucket };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = task.sample(len, mode, &mut rng).unwrap();
        prop_assert_eq!(ex.len(), len);
        prop_assert_eq!(ex.target.len(), len);
        for i in 0..len {
            // The loss never sees padding.
            prop_assert_eq!(ex.input[i] == PAD, ex.mask[i] == 0);
            prop_assert!(ex.input[i] < task.vocab() && ex.target[i] < task.classes());
        }
        if let Task::Sorting { .. } = task {
            let raw: Vec<usize> = ex.input.iter().copied().filter(|&v| v != PAD).collect();
            let mut sorted = raw.clone();
            sorted.sort();
            let target: Vec<usize> = ex.target.iter().zip(&ex.mask).filter(|(_, &m)| m == 1).map(|(&t, _)| t).collect();
            prop_assert_eq!(target, sorted);
        }
        prop_assert_eq!(TaskExample::from_line(&ex.to_line()).unwrap(), ex);
    }

    #[test]
    fn padding_keeps_content_and_mask(seed in any::<u64>(), a in bits_strategy(20), b in bits_strategy(20)) {
        let ex = addition_example(&a, &b);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let padded = pad_to_bucket(&ex, 64, Some(&mut rng)).unwrap();
        prop_assert_eq!(padded.len(), bucket_for(ex.len()));
        prop_assert!(padded.len().is_power_of_two() && padded.len() >= ex.len());
        prop_assert_eq!(padded.masked(), ex.masked());
        let start = padded.mask.iter().position(|&m| m == 1).unwrap();
        prop_assert_eq!(&padded.input[start..start + ex.len()], &ex.input[..]);
        prop_assert_eq!(&padded.target[start..start + ex.len()], &ex.target[..]);
        prop_assert!(pad_to_length(&ex, ex.len() - 1, None::<&mut ChaCha8Rng>).is_err());
    }

    #[test]
    fn batches_flatten_rows(seed in any::<u64>(), rows in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples: Vec<TaskExample> = (0..rows).map(|_| Task::Addition.sample(16, LengthMode::Bucket, &mut rng).unwrap()).collect();
        let batch = Batch::new(&examples).unwrap();
        prop_assert_eq!(batch.ids.len(), rows * 16);
        prop_assert_eq!(batch.mask.iter().sum::<f64>() as usize, examples.iter().map(|e| e.masked()).sum::<usize>());
    }

    #[test]
    fn curriculum_is_a_distribution(total in 4u64..100_000, frac in 0.0f64..1.5) {
        let c = Curriculum::new(&[8, 16, 32, 64], total).unwrap();
        let step = (frac * total as f64) as u64;
        let p = c.probabilities(step);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!(c.expected_length(step) <= c.expected_length(step + 1) + 1e-12);
        if step >= total / 4 {
            prop_assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-12));
        }
        prop_assert!(c.buckets().contains(&c.sample(step, 3)));
    }

    #[test]
    fn layernorm_rows_are_standardized(seed in any::<u64>(), rows in 1usize..5, width in 2usize..40, scale in 0.01f64..10.0) {
        let x = Tensor::<f64>::normal([rows, width], scale, &mut ChaCha8Rng::seed_from_u64(seed));
        let (y, _) = kernels::layernorm(&x, 1e-12);
        for r in y.data().chunks(width) {
            let mean = r.iter().sum::<f64>() / width as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn swap_half_is_an_involution(seed in any::<u64>(), half in 1usize..8) {
        let m = 2 * half;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f64>::normal([m], 1.0, &mut rng);
        let b = Tensor::<f64>::normal([m], 1.0, &mut rng);
        let once = swap_half(&a, &b).unwrap();
        let (s1, s2) = once.data().split_at(m);
        let (s1, s2) = (Tensor::new([m], s1.to_vec()).unwrap(), Tensor::new([m], s2.to_vec()).unwrap());
        let twice = swap_half(&s1, &s2).unwrap();
        let joined = kernels::concat_features(&a, &b).unwrap();
        prop_assert_eq!(twice.data(), joined.data());
        prop_assert_eq!(&once.data()[..half], &a.data()[..half]);
        prop_assert_eq!(&once.data()[half..m], &b.data()[half..]);
    }

    #[test]
    fn rsu_residual_bound(seed in any::<u64>(), m in 1usize..8, r in 0.5f64..0.999) {
        // out = sigmoid(S) ⊙ in + h·c, so |out − r·in| <= h·|c| elementwise.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rsu_init::<f64, _>(m, 4 * m, r, &mut rng).unwrap();
        let x = Tensor::<f64>::normal([3, 2 * m], 0.25, &mut rng);
        let mut g = Eager;
        let bound = p.map("", &mut |_, t| g.param(t));
        let input = g.constant(x.clone());
        let with = rsu_forward(&mut g, &bound, &input, &AblationFlags::default()).unwrap();
        let none = AblationFlags { residual: Residual::None, ..AblationFlags::default() };
        let c = rsu_forward(&mut g, &bound, &input, &none).unwrap();
        for ((o, i), c) in with.data().iter().zip(x.data()).zip(c.data()) {
            prop_assert!((o - (r * i + p.h * c)).abs() < 1e-9);
        }
    }

    #[test]
    fn radam_rectifier_is_bounded(t in 1u64..100_000) {
        let (rho, rho_inf) = radam_rho(0.999, t);
        prop_assert!(rho <= rho_inf + 1e-9);
        if let Some(r) = radam_rectifier(0.999, t) {
            prop_assert!(rho > 4.0 && r > 0.0 && r <= 1.0 + 1e-12);
        } else {
            prop_assert!(rho <= 4.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn body_preserves_shape_at_every_length(seed in any::<u64>(), k in 2u32..8, blocks in 1usize..3) {
        let n = 1usize << k;
        let cfg = ModelConfig::tokens(4, 4, 4, blocks).with_n_max(n);
        let p = build_model::<f64>(&cfg, seed).unwrap();
        let x = Tensor::<f64>::normal([2, n, 4], 0.25, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut g = Eager;
        let bound = p.bind(&mut g);
        let input = g.constant(x);
        let y = body(&mut g, &bound, input, &AblationFlags::default(), None).unwrap();
        prop_assert_eq!(y.shape(), &[2, n, 4]);
        prop_assert!(y.all_finite());
    }
}
