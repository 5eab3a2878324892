//! Measurements on an initialized model: per-layer signal amplitude and
//! which input positions reach which outputs.

use rand::Rng;
use rand_distr::StandardNormal;

use super::forward::body;
use super::params::ModelParams;
use crate::error::Result;
use crate::numcore::{Eager, Graph, Real, Tape, Tensor};
use crate::units::AblationFlags;

/// Elementwise std of every switch layer's output when the body is fed
/// i.i.d. normal features of std `input_std`, shape `[batch, n, m]`.
pub fn switch_layer_amplitudes<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<Tensor<T>>,
    flags: &AblationFlags,
    n: usize,
    batch: usize,
    input_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = model_width(params);
    let data: Vec<T> = (0..batch * n * m)
        .map(|_| T::lit(input_std * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let x = Tensor::new([batch, n, m], data)?;
    let mut g = Eager;
    let bound = params.bind(&mut g);
    let input = g.constant(x);
    let mut stds = Vec::new();
    let mut obs = |_: usize, t: &Tensor<T>| stds.push(t.std());
    body(&mut g, &bound, input, flags, Some(&mut obs))?;
    Ok(stds)
}

/// `norms[j][i]` is the Frobenius norm of `∂ out[j] / ∂ in[i]` for the body
/// at length `n`, evaluated at random normal input features.
pub fn jacobian_position_norms<R: Rng + ?Sized>(
    params: &ModelParams<Tensor<f64>>,
    flags: &AblationFlags,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let m = model_width(params);
    let data: Vec<f64> = (0..n * m).map(|_| 0.25 * rng.sample::<f64, _>(StandardNormal)).collect();
    let x = Tensor::new([n, m], data)?;
    let mut norms = vec![vec![0.0; n]; n];
    for (j, row) in norms.iter_mut().enumerate() {
        for c in 0..m {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let input = tape.param(&x);
            let out = body(&mut tape, &bound, input, flags, None)?;
            let mut pick = vec![0.0; n * m];
            pick[j * m + c] = 1.0;
            let pick = tape.constant(Tensor::new([n, m], pick)?);
            let selected = tape.mul(&out, &pick)?;
            let root = tape.sum(&selected);
            tape.backward(root)?;
            let grad = tape.grad(input).expect("input is a differentiable leaf");
            for (i, acc) in row.iter_mut().enumerate() {
                *acc += grad.data()[i * m..(i + 1) * m].iter().map(|v| v * v).sum::<f64>();
            }
        }
        for v in row.iter_mut() {
            *v = v.sqrt();
        }
    }
    Ok(norms)
}

fn model_width<T: Real>(params: &ModelParams<Tensor<T>>) -> usize {
    params.head.weight.shape()[0]
}
