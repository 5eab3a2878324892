//! Trains on lengths up to 32 and evaluates the same weights at longer
//! lengths. Pass a checkpoint to evaluate it instead.
//!
//! ```text
//! cargo run --release --example generalization -- [steps]
//! cargo run --release --example generalization -- runs/default/final.rse
//! ```

use rse::cli::{infer_token_config, load};
use rse::network::{build_model, ModelConfig, ModelParams};
use rse::numcore::Tensor;
use rse::tasks::Task;
use rse::train::{evaluate, train_loop, TrainConfig};

fn main() -> rse::Result<()> {
    let task = Task::Addition;
    let arg = std::env::args().nth(1);
    let (model, params): (ModelConfig, ModelParams<Tensor<f32>>) = match arg.as_deref() {
        Some(path) if path.ends_with(".rse") => {
            let stored = load(path.as_ref())?;
            let base = ModelConfig::tokens(task.vocab(), task.classes(), 1, 1);
            let model = infer_token_config(&stored, &base)?.with_n_max(1024);
            let mut params = build_model::<f32>(&model, 0)?;
            params.load_named(stored.into_iter().map(|(n, t)| (n, t.to_tensor())).collect())?;
            (model, params)
        }
        other => {
            let steps = other.and_then(|s| s.parse().ok()).unwrap_or(3000);
            let model = ModelConfig::tokens(task.vocab(), task.classes(), 32, 1).with_n_max(1024);
            let mut params = build_model::<f32>(&model, 0)?;
            let mut train = TrainConfig::new(task, steps);
            train.buckets = vec![8, 16, 32];
            train.eval_lengths = vec![32];
            train.eval_every = steps;
            train_loop(&model, &mut params, &train, &mut (), None)?;
            (model, params)
        }
    };
    for length in [32, 64, 128, 256, 512, 1024] {
        let e = evaluate(&model, &params, task, length, 64, 1)?;
        println!("length {length:>4}: per-symbol {:.4}, sequence {:.4}", e.per_symbol_acc, e.seq_acc);
    }
    Ok(())
}
