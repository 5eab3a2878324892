//! Forward latency of the body across lengths and the fitted log-log slope.
//!
//! ```text
//! cargo run --release --example bench -- [max length]
//! ```

use rse::network::{build_model, ModelConfig};
use rse::train::{bench_forward, fit_points, BenchOptions};

fn main() -> rse::Result<()> {
    let max: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1 << 15);
    let model = ModelConfig::tokens(4, 4, 48, 1).with_n_max(max);
    let params = build_model::<f32>(&model, 0)?;
    let lengths: Vec<usize> = (10..=max.trailing_zeros()).map(|k| 1 << k).collect();
    let points = bench_forward(&model, &params, &lengths, BenchOptions::default())?;
    for p in &points {
        match &p.unsupported {
            None => println!("n = {:>7}: {:>9.4} s", p.length, p.mean()),
            Some(why) => println!("n = {:>7}: unsupported, {why}", p.length),
        }
    }
    let fit = fit_points(&points)?;
    println!("slope {:.3} ± {:.3}", fit.slope, fit.ci95);
    Ok(())
}
