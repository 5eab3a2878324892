use super::*;
use crate::network::{build_model, ModelConfig, UnitKind};
use crate::tasks::{Task, DEFAULT_ALPHABET};

fn small_train(task: Task, steps: u64) -> TrainConfig {
    let mut t = TrainConfig::new(task, steps);
    t.buckets = vec![8];
    t.eval_lengths = vec![8];
    t.eval_examples = 16;
    t.log_every = 10;
    t.eval_every = 25;
    t.batch = 16;
    t
}

#[test]
fn smoke_run_reduces_loss() {
    let cfg = ModelConfig::tokens(4, 4, 16, 1).with_n_max(8);
    let mut p = build_model::<f32>(&cfg, 1).unwrap();
    let mut train = small_train(Task::Addition, 50);
    train.optimizer.lr = 3e-3;
    let out = train_loop(&cfg, &mut p, &train, &mut (), None).unwrap();
    assert_eq!(out.steps_run, 50);
    let early = out.mean_loss(0, 5);
    let late = out.mean_loss(45, 50);
    assert!(late < early, "loss {early} -> {late}");
    assert!(out.metrics.iter().all(|m| (0.0..=1.0).contains(&m.per_symbol_acc) && (0.0..=1.0).contains(&m.seq_acc)));
    assert_eq!(out.metrics.iter().filter(|m| m.is_eval()).count(), 2);
}

#[test]
fn identical_seeds_identical_metrics() {
    let cfg = ModelConfig::tokens(4, 4, 8, 1);
    let run = |seed| {
        let mut p = build_model::<f32>(&cfg, seed).unwrap();
        let mut train = small_train(Task::Addition, 30);
        train.buckets = vec![8, 16];
        train.seed = seed;
        let out = train_loop(&cfg, &mut p, &train, &mut (), None).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &out.metrics, true).unwrap();
        (buf, p)
    };
    let (a, pa) = run(7);
    let (b, pb) = run(7);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let (c, _) = run(8);
    assert_ne!(a, c);
}

#[test]
fn untrained_sorting_is_near_chance() {
    let task = Task::Sorting { alphabet: DEFAULT_ALPHABET };
    let cfg = ModelConfig::tokens(task.vocab(), task.classes(), 16, 1);
    let mut accs = Vec::new();
    for seed in 0..8 {
        let p = build_model::<f32>(&cfg, seed).unwrap();
        accs.push(evaluate(&cfg, &p, task, 64, 32, seed).unwrap().per_symbol_acc);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let chance = 1.0 / DEFAULT_ALPHABET as f64;
    assert!((mean - chance).abs() <= 0.05, "mean accuracy {mean} vs chance {chance} ({accs:?})");
}

#[test]
fn evaluation_reproduces_training_numbers() {
    let cfg = ModelConfig::tokens(4, 4, 8, 1);
    let mut p = build_model::<f32>(&cfg, 2).unwrap();
    let mut train = small_train(Task::Addition, 25);
    train.eval_lengths = vec![8, 16];
    let out = train_loop(&cfg, &mut p, &train, &mut (), None).unwrap();
    for e in &out.last_eval {
        let again = evaluate(&cfg, &p, Task::Addition, e.length, train.eval_examples, train.seed).unwrap();
        assert_eq!(again, *e);
    }
}

#[test]
fn evaluation_at_4096_runs() {
    let cfg = ModelConfig::tokens(4, 4, 8, 1);
    let p = build_model::<f32>(&cfg, 0).unwrap();
    let e = evaluate(&cfg, &p, Task::Addition, 4096, 2, 0).unwrap();
    assert!((0.0..=1.0).contains(&e.per_symbol_acc));
    assert!(evaluate(&cfg, &p, Task::Addition, 100, 2, 0).is_err());
}

#[test]
fn divergence_aborts() {
    let cfg = ModelConfig::tokens(4, 4, 8, 1);
    let mut p = build_model::<f32>(&cfg, 0).unwrap();
    let mut train = small_train(Task::Addition, 200);
    // Any loss counts as "above" with a zero factor; abort after 20 steps.
    train.divergence_factor = 0.0;
    train.divergence_window = 20;
    match train_loop(&cfg, &mut p, &train, &mut (), None) {
        Err(crate::Error::Diverged { step, window, .. }) => {
            assert_eq!(window, 20);
            assert_eq!(step, 19);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn masked_positions_do_not_count() {
    use crate::numcore::Tensor;
    use crate::tasks::{sorting_example, pad_to_length, Batch};
    let ex = pad_to_length::<rand_chacha::ChaCha8Rng>(&sorting_example(&[2, 1]), 4, None).unwrap();
    let batch = Batch::new(&[ex]).unwrap();
    // Correct on the two real positions, wrong on both pads.
    let mut logits = vec![0.0f64; 4 * 3];
    logits[1] = 5.0; // pos 0 -> 1
    logits[3 + 2] = 5.0; // pos 1 -> 2
    logits[6 + 1] = 5.0; // pad predicted as 1
    logits[9 + 2] = 5.0;
    let t = Tensor::new([1, 4, 3], logits).unwrap();
    assert_eq!(score(&t, &batch), (2, 2, 1));
}

#[test]
fn learnable_set_excludes_h() {
    let cfg = ModelConfig::tokens(4, 4, 8, 1);
    let p = build_model::<f32>(&cfg, 0).unwrap();
    let names = p.names();
    assert!(names.iter().all(|n| !n.ends_with(".h")));
    let mut q = p.clone();
    let mut opt = OptimizerState::new(OptimizerConfig::default(), &q);
    let grads: Vec<_> = p.named_tensors().iter().map(|(_, t)| {
        let mut g = (*t).clone();
        g.data_mut().iter_mut().for_each(|v| *v = 1.0);
        g
    }).collect();
    opt.apply(&mut q, &grads).unwrap();
    let h = |m: &crate::network::ModelParams<crate::numcore::Tensor<f32>>| match &m.final_layer {
        crate::units::UnitParams::Residual(r) => r.h,
        _ => unreachable!(),
    };
    assert_eq!(h(&p), h(&q));
    assert_ne!(p.head.bias, q.head.bias);
}

#[test]
fn gated_baseline_trains_through_same_loop() {
    let cfg = ModelConfig::tokens(4, 4, 8, 1).with_unit(UnitKind::Gated);
    let mut p = build_model::<f32>(&cfg, 0).unwrap();
    let mut train = small_train(Task::Addition, 40);
    train.optimizer.lr = 3e-3;
    let out = train_loop(&cfg, &mut p, &train, &mut (), None).unwrap();
    assert!(out.mean_loss(35, 40) < out.mean_loss(0, 5));
}

#[test]
fn stop_at_ends_run() {
    let cfg = ModelConfig::tokens(4, 4, 8, 1);
    let mut p = build_model::<f32>(&cfg, 0).unwrap();
    let mut train = small_train(Task::Addition, 100);
    train.stop_at = Some((8, 0.0));
    let out = train_loop(&cfg, &mut p, &train, &mut (), None).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.steps_run, 25);
}
