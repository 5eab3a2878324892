//! Samples task instances, including the padded training form.
//!
//! ```text
//! cargo run --release --example gen_data
//! ```

use rse::rng::{self, Stream};
use rse::tasks::{LengthMode, Task, DEFAULT_ALPHABET};

fn main() -> rse::Result<()> {
    let mut rng = rng::stream(0, Stream::Data);
    for task in [Task::Addition, Task::Multiplication, Task::Sorting { alphabet: DEFAULT_ALPHABET }] {
        println!("{}", task.name());
        for mode in [LengthMode::Full, LengthMode::Bucket] {
            let ex = task.sample(16, mode, &mut rng)?;
            println!("  {mode:?}");
            println!("    input  {:?}", ex.input);
            println!("    target {:?}", ex.target);
            println!("    mask   {:?}", ex.mask);
        }
    }
    Ok(())
}
