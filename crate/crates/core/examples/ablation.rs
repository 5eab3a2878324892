//! Short multiplication runs with LayerNorm or the residual removed, compared
//! against the default unit at the same step.
//!
//! ```text
//! cargo run --release --example ablation -- [steps]
//! ```

use rse::network::{build_model, ModelConfig};
use rse::tasks::Task;
use rse::train::{train_loop, TrainConfig};
use rse::units::{AblationFlags, Residual};

fn main() -> rse::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let task = Task::Multiplication;
    let variants = [
        ("default", AblationFlags::default()),
        ("no layernorm", AblationFlags { layernorm: false, ..AblationFlags::default() }),
        ("no residual", AblationFlags { residual: Residual::None, ..AblationFlags::default() }),
        ("residual weight 1", AblationFlags { residual: Residual::ConstantOne, ..AblationFlags::default() }),
    ];
    for (name, flags) in variants {
        let model = ModelConfig::tokens(task.vocab(), task.classes(), 32, 2).with_n_max(16).with_flags(flags);
        let mut params = build_model::<f32>(&model, 0)?;
        let mut train = TrainConfig::new(task, steps);
        train.buckets = vec![8, 16];
        train.eval_lengths = vec![16];
        train.eval_every = steps;
        match train_loop(&model, &mut params, &train, &mut (), None) {
            Ok(out) => {
                let tail = (steps as usize).saturating_sub(200);
                let acc = out.eval_at(16).map_or(0.0, |e| e.per_symbol_acc);
                println!("{name:<18} loss over last 200 steps {:.4}, accuracy at 16 {acc:.3}", out.mean_loss(tail, steps as usize));
            }
            Err(e) => println!("{name:<18} {e}"),
        }
    }
    Ok(())
}
