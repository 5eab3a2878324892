//! Saves a model, reloads it and checks the forward pass is unchanged. Then
//! flips one byte and shows the checksum catching it.
//!
//! ```text
//! cargo run --release --example checkpoint
//! ```

use rse::cli::{decode, encode, load_model, save};
use rse::network::{build_model, ModelConfig};
use rse::tasks::Task;
use rse::train::evaluate;

fn main() -> rse::Result<()> {
    let task = Task::Addition;
    let model = ModelConfig::tokens(task.vocab(), task.classes(), 16, 1).with_n_max(64);
    let params = build_model::<f32>(&model, 5)?;
    let dir = std::env::temp_dir().join("rse-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.rse");
    save(&path, &params)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let restored = load_model::<f32>(&path, &model)?;
    let a = evaluate(&model, &params, task, 64, 32, 0)?;
    let b = evaluate(&model, &restored, task, 64, 32, 0)?;
    println!("accuracy before {:.6}, after {:.6}, identical: {}", a.per_symbol_acc, b.per_symbol_acc, a == b);

    let mut bytes = encode(&params.named_tensors());
    bytes[40] ^= 1;
    match decode(&bytes) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted copy rejected: {e}"),
    }
    Ok(())
}
