//! Perfect shuffle, its inverse and the layer schedule of a Beneš block.
//!
//! ```text
//! cargo run --release --example shuffle
//! ```

use rse::network::{Layer, PositionalStructure, UnitSlot};
use rse::shuffle::{inverse_shuffle, perfect_shuffle, rotl_index};

fn main() -> rse::Result<()> {
    let x: Vec<usize> = (0..8).collect();
    let s = perfect_shuffle(&x)?;
    println!("input          {x:?}");
    println!("shuffled       {s:?}");
    println!("inverse        {:?}", inverse_shuffle(&x)?);
    println!("round trip     {:?}", inverse_shuffle(&s)?);
    for a in 0..8 {
        println!("  {a} = {a:03b} -> rotl -> {:03b}", rotl_index(a, 3)?);
    }

    // Repeating the shuffle k times returns to the start.
    let mut y = x.clone();
    for step in 1..=3 {
        y = perfect_shuffle(&y)?;
        println!("after {step} shuffles: {y:?}");
    }

    for n in [8, 16, 1024] {
        let plan = PositionalStructure::new(n, 2)?;
        println!("n = {n:>4}, 2 blocks: {} switch layers", plan.switch_layers());
    }
    let plan = PositionalStructure::new(8, 1)?;
    let names: Vec<&str> = plan
        .layers
        .iter()
        .map(|l| match l {
            Layer::Switch(UnitSlot::Forward(_)) => "S(fwd)",
            Layer::Switch(UnitSlot::Reverse(_)) => "S(rev)",
            Layer::Switch(UnitSlot::Final) => "S(final)",
            Layer::Shuffle => "shuffle",
            Layer::InverseShuffle => "unshuffle",
        })
        .collect();
    println!("n = 8, 1 block: {}", names.join(" "));
    Ok(())
}
