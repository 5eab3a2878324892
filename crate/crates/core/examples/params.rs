//! Parameter counts of the bundled presets.
//!
//! ```text
//! cargo run --release --example params
//! ```

use rse::network::{build_model, Preset};

fn main() -> rse::Result<()> {
    for preset in Preset::ALL {
        let p = build_model::<f32>(&preset.config(), 0)?;
        println!("{}", preset.name());
        for (name, count) in p.breakdown() {
            println!("  {name:<24} {count:>10}");
        }
        println!("  {:<24} {:>10}", "switch units", p.switch_unit_count());
        println!("  {:<24} {:>10}\n", "total", p.param_count());
    }
    Ok(())
}
