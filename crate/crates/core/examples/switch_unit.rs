//! One residual switch unit on a batch of element pairs: at initialization
//! the output keeps the input amplitude.
//!
//! ```text
//! cargo run --release --example switch_unit
//! ```

use rse::numcore::{Eager, Graph, Tensor};
use rse::rng::{self, Stream};
use rse::units::{residual_scale, rsu_forward, rsu_init, AblationFlags, Residual};

fn main() -> rse::Result<()> {
    let m = 32;
    let r = 0.9;
    let mut init = rng::stream(0, Stream::Init);
    let params = rsu_init::<f64, _>(m, 4 * m, r, &mut init)?;
    println!("m = {m}, hidden = {}, r = {r}, h = {:.4}", 4 * m, residual_scale(r));

    let pairs = Tensor::<f64>::normal([4096, 2 * m], 0.25, &mut rng::stream(0, Stream::Probe));
    let mut g = Eager;
    let bound = params.map("", &mut |_, t| g.param(t));
    let x = g.constant(pairs.clone());
    for (label, residual) in [("scaled residual", Residual::Scaled), ("residual weight 1", Residual::ConstantOne), ("no residual", Residual::None)] {
        let flags = AblationFlags { residual, ..AblationFlags::default() };
        let y = rsu_forward(&mut g, &bound, &x, &flags)?;
        println!("{label:>18}: input std {:.4}, output std {:.4}", pairs.std(), y.std());
    }
    Ok(())
}
