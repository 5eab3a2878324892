//! Trains a small model on binary addition and streams the metrics CSV.
//!
//! ```text
//! cargo run --release --example train_addition -- [steps] [feature maps]
//! ```

use rse::network::{build_model, ModelConfig};
use rse::tasks::Task;
use rse::train::{train_loop, TrainConfig, TrainMetrics, TrainSink, CSV_HEADER};

struct Stdout;

impl TrainSink<f32> for Stdout {
    fn metrics(&mut self, row: &TrainMetrics) -> rse::Result<()> {
        println!("{}", row.csv_row());
        Ok(())
    }
}

fn main() -> rse::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let m: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(32);

    let task = Task::Addition;
    let model = ModelConfig::tokens(task.vocab(), task.classes(), m, 1).with_n_max(64);
    let mut params = build_model::<f32>(&model, 0)?;
    let mut train = TrainConfig::new(task, steps);
    train.eval_lengths = vec![32, 64];
    train.eval_every = 500;
    train.log_wallclock = true;

    println!("{CSV_HEADER}");
    let out = train_loop(&model, &mut params, &train, &mut Stdout, None)?;
    for e in &out.last_eval {
        eprintln!("length {:>3}: per-symbol {:.3}, sequence {:.3}", e.length, e.per_symbol_acc, e.seq_acc);
    }
    Ok(())
}
