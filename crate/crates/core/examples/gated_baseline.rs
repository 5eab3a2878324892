//! The gated switch unit and the residual switch unit trained through the
//! same loop on the same data.
//!
//! ```text
//! cargo run --release --example gated_baseline -- [steps]
//! ```

use rse::network::{build_model, ModelConfig, UnitKind};
use rse::tasks::Task;
use rse::train::{train_loop, TrainConfig};

fn main() -> rse::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let task = Task::Addition;
    for unit in [UnitKind::Residual, UnitKind::Gated] {
        let model = ModelConfig::tokens(task.vocab(), task.classes(), 32, 1).with_n_max(32).with_unit(unit);
        let mut params = build_model::<f32>(&model, 0)?;
        let mut train = TrainConfig::new(task, steps);
        train.buckets = vec![8, 16, 32];
        train.eval_lengths = vec![32];
        train.eval_every = steps;
        let t = std::time::Instant::now();
        let out = train_loop(&model, &mut params, &train, &mut (), None)?;
        let acc = out.eval_at(32).map_or(0.0, |e| e.per_symbol_acc);
        println!(
            "{unit:?}: {} params, final loss {:.4}, accuracy at 32 {acc:.3}, {:.1} s",
            params.param_count(),
            out.mean_loss(steps as usize - 100, steps as usize),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
