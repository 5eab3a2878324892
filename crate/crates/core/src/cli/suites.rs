//! Named gradient-check suites, one per differentiable operation plus the
//! composite units and the full model.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{
    build_model, conv_frontend, rse_forward, ConvParams, InputKind, InputParams, ModelConfig, ModelInput,
};
use crate::numcore::{gradcheck, DType, GradCheckReport, Graph, Permutation, Real, Tape, Tensor, Var};
use crate::rng::{self, Stream, StreamRng};
use crate::units::{gated_su_forward, gated_su_init, rsu_forward, rsu_init, AblationFlags, GatedSuParams, RsuParams};

pub const OP_SUITES: &[&str] = &[
    "affine",
    "layernorm",
    "gelu",
    "relu",
    "sigmoid",
    "tanh",
    "add",
    "mul",
    "mul_features",
    "scale_shift",
    "reshape",
    "permute_seq",
    "gather_features",
    "concat_features",
    "embedding",
    "conv1d",
    "select_position",
    "softmax_xent",
    "sum",
];

pub const COMPOSITE_SUITES: &[&str] = &["rsu", "gated_su", "conv_frontend", "model"];

pub fn all_suites() -> impl Iterator<Item = &'static str> {
    OP_SUITES.iter().chain(COMPOSITE_SUITES).copied()
}

pub fn is_suite(name: &str) -> bool {
    all_suites().any(|s| s == name)
}

/// Threshold a suite must stay under by default.
pub fn default_tolerance(name: &str) -> f64 {
    if name == "model" {
        1e-3
    } else {
        1e-4
    }
}

/// Central-difference step suited to the precision.
pub fn default_step<T: Real>() -> f64 {
    match T::DTYPE {
        DType::F32 => 1e-2,
        DType::F64 => 1e-6,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub points: usize,
    /// Worst report across all points.
    pub worst: GradCheckReport,
}

impl SuiteResult {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst.passes(tol)
    }
}

/// Number of random points a suite is checked at.
pub fn default_points(name: &str) -> usize {
    match name {
        "model" => 3,
        "conv_frontend" | "gated_su" | "rsu" => 5,
        _ => 10,
    }
}

pub fn run_suite<T: Real>(name: &str, points: usize, seed: u64, step: f64) -> Result<SuiteResult> {
    let name = all_suites()
        .find(|s| *s == name)
        .ok_or_else(|| Error::invalid(format!("unknown gradcheck suite `{name}`")))?;
    let mut worst: Option<GradCheckReport> = None;
    for point in 0..points {
        let mut rng = rng::indexed(seed, Stream::Probe, point as u64);
        let report = check_point::<T>(name, &mut rng, step)?;
        if worst.as_ref().is_none_or(|w| report.max_rel_error > w.max_rel_error) {
            worst = Some(report);
        }
    }
    let worst = worst.ok_or_else(|| Error::invalid("gradcheck needs at least one point"))?;
    Ok(SuiteResult { name, points, worst })
}

fn normal<T: Real>(shape: &[usize], rng: &mut StreamRng) -> Tensor<T> {
    Tensor::normal(shape.to_vec(), 1.0, rng)
}

/// Scalar `sum(y ⊙ w)` so every output coordinate matters.
fn weighted_sum<T: Real>(t: &mut Tape<T>, y: &Var, w: &Tensor<T>) -> Result<Var> {
    let w = t.constant(w.clone());
    let prod = t.mul(y, &w)?;
    Ok(t.sum(&prod))
}

fn unary<T: Real>(
    x: Tensor<T>,
    step: f64,
    rng: &mut StreamRng,
    op: impl Fn(&mut Tape<T>, &Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut probe = Tape::new();
    let px = probe.param(&x);
    let y = op(&mut probe, &px)?;
    let w = normal::<T>(probe.value(&y).shape(), rng);
    gradcheck(
        |t, v| {
            let y = op(t, &v[0])?;
            weighted_sum(t, &y, &w)
        },
        &[x],
        step,
    )
}

fn random_perm(n: usize, rng: &mut StreamRng) -> Arc<Permutation> {
    let mut map: Vec<usize> = (0..n).collect();
    map.shuffle(rng);
    Arc::new(Permutation::new(map).expect("a shuffled range is a permutation"))
}

fn check_point<T: Real>(name: &str, rng: &mut StreamRng, step: f64) -> Result<GradCheckReport> {
    match name {
        "affine" => {
            let inputs = [normal::<T>(&[3, 4], rng), normal(&[4, 5], rng), normal(&[5], rng)];
            let w = normal::<T>(&[3, 5], rng);
            gradcheck(
                |t, v| {
                    let y = t.affine(&v[0], &v[1], Some(&v[2]))?;
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "layernorm" => unary::<T>(normal(&[3, 6], rng), step, rng, |t, x| Ok(t.layernorm(x, 1e-5))),
        "gelu" => unary::<T>(normal(&[3, 5], rng), step, rng, |t, x| Ok(t.gelu(x))),
        "relu" => {
            // Stay clear of the kink at zero.
            let data = (0..15)
                .map(|_| {
                    let v: f64 = rng.random_range(0.1..2.0);
                    T::lit(if rng.random_bool(0.5) { v } else { -v })
                })
                .collect();
            unary::<T>(Tensor::new([3, 5], data)?, step, rng, |t, x| Ok(t.relu(x)))
        }
        "sigmoid" => unary::<T>(normal(&[3, 5], rng), step, rng, |t, x| Ok(t.sigmoid(x))),
        "tanh" => unary::<T>(normal(&[3, 5], rng), step, rng, |t, x| Ok(t.tanh(x))),
        "add" | "mul" => {
            let inputs = [normal::<T>(&[3, 4], rng), normal(&[3, 4], rng)];
            let w = normal::<T>(&[3, 4], rng);
            let is_add = name == "add";
            gradcheck(
                |t, v| {
                    let y = if is_add { t.add(&v[0], &v[1])? } else { t.mul(&v[0], &v[1])? };
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "mul_features" => {
            let inputs = [normal::<T>(&[2, 3, 4], rng), normal(&[4], rng)];
            let w = normal::<T>(&[2, 3, 4], rng);
            gradcheck(
                |t, v| {
                    let y = t.mul_features(&v[0], &v[1])?;
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "scale_shift" => unary::<T>(normal(&[3, 4], rng), step, rng, |t, x| Ok(t.scale_shift(x, 1.7, -0.3))),
        "reshape" => {
            let x = normal::<T>(&[2, 6], rng);
            let w = normal::<T>(&[3, 4], rng);
            gradcheck(
                |t, v| {
                    let y = t.reshape(&v[0], &[3, 4])?;
                    weighted_sum(t, &y, &w)
                },
                &[x],
                step,
            )
        }
        "permute_seq" => {
            let perm = random_perm(8, rng);
            unary::<T>(normal(&[2, 8, 3], rng), step, rng, move |t, x| t.permute_seq(x, &perm))
        }
        "gather_features" => {
            let idx = random_perm(6, rng);
            unary::<T>(normal(&[3, 6], rng), step, rng, move |t, x| t.gather_features(x, &idx))
        }
        "concat_features" => {
            let inputs = [normal::<T>(&[3, 2], rng), normal(&[3, 4], rng)];
            let w = normal::<T>(&[3, 6], rng);
            gradcheck(
                |t, v| {
                    let y = t.concat_features(&v[0], &v[1])?;
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "embedding" => {
            let ids: Vec<usize> = (0..6).map(|_| rng.random_range(0..5)).collect();
            let table = normal::<T>(&[5, 3], rng);
            let w = normal::<T>(&[2, 3, 3], rng);
            gradcheck(
                |t, v| {
                    let y = t.embedding(&v[0], &ids, &[2, 3])?;
                    weighted_sum(t, &y, &w)
                },
                &[table],
                step,
            )
        }
        "conv1d" => {
            let inputs = [normal::<T>(&[2, 8, 3], rng), normal(&[3, 3, 4], rng), normal(&[4], rng)];
            let w = normal::<T>(&[2, 4, 4], rng);
            gradcheck(
                |t, v| {
                    let y = t.conv1d(&v[0], &v[1], &v[2], 2)?;
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "select_position" => {
            let pos = rng.random_range(0..4);
            unary::<T>(normal(&[2, 4, 3], rng), step, rng, move |t, x| t.select_position(x, pos))
        }
        "softmax_xent" => {
            let logits = normal::<T>(&[4, 5], rng);
            let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
            let mask = [1.0, 0.5, 0.0, 1.0].map(T::lit);
            gradcheck(|t, v| t.softmax_xent(&v[0], &labels, &mask), &[logits], step)
        }
        "sum" => {
            let x = normal::<T>(&[3, 4], rng);
            gradcheck(
                |t, v| {
                    let sq = t.mul(&v[0], &v[0])?;
                    Ok(t.sum(&sq))
                },
                &[x],
                step,
            )
        }
        "rsu" => {
            let p: RsuParams<Tensor<T>> = rsu_init(4, 16, 0.9, rng)?;
            // Random gate logits and bias so those gradients are not trivial.
            let inputs = [p.z, p.w, normal(&[8], rng), normal(&[8], rng), normal(&[3, 8], rng)];
            let w = normal::<T>(&[3, 8], rng);
            let h = p.h;
            gradcheck(
                |t, v| {
                    let bound = RsuParams { z: v[0], w: v[1], b: v[2], s: v[3], h };
                    let y = rsu_forward(t, &bound, &v[4], &AblationFlags::default())?;
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "gated_su" => {
            let p: GatedSuParams<Tensor<T>> = gated_su_init(4, rng)?;
            let mut inputs = Vec::new();
            p.visit("", &mut |_, t| inputs.push(t.clone()));
            inputs.push(normal(&[3, 8], rng));
            let w = normal::<T>(&[3, 8], rng);
            gradcheck(
                |t, v| {
                    let mut i = 0;
                    let bound = p.map("", &mut |_, _| {
                        i += 1;
                        v[i - 1]
                    });
                    let y = gated_su_forward(t, &bound, &v[v.len() - 1])?;
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "conv_frontend" => {
            // LayerNorm over two channels saturates at ±1; eight keeps it smooth.
            let cfg = ModelConfig::tokens(1, 2, 8, 1).with_input(InputKind::Signal { conv_layers: 2, kernel_width: 4 });
            let p = build_model::<T>(&cfg, rng.random())?;
            let InputParams::Frontend { convs, lift_w, lift_b } = &p.input else {
                unreachable!("signal input builds a frontend")
            };
            let mut inputs = Vec::new();
            for c in convs {
                inputs.push(c.kernel.clone());
                inputs.push(c.bias.clone());
            }
            inputs.push(lift_w.clone());
            inputs.push(lift_b.clone());
            inputs.push(normal(&[16, 1], rng));
            let w = normal::<T>(&[4, 8], rng);
            gradcheck(
                |t, v| {
                    let convs = vec![ConvParams { kernel: v[0], bias: v[1] }, ConvParams { kernel: v[2], bias: v[3] }];
                    let params = InputParams::Frontend { convs, lift_w: v[4], lift_b: v[5] };
                    let y = conv_frontend(t, &params, &v[6])?;
                    weighted_sum(t, &y, &w)
                },
                &inputs,
                step,
            )
        }
        "model" => {
            let cfg = ModelConfig::tokens(4, 3, 4, 1).with_n_max(8);
            let p = build_model::<T>(&cfg, rng.random())?;
            let tensors: Vec<Tensor<T>> = p.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
            let ids: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
            let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
            let mask: Vec<T> = (0..8).map(|i| T::lit(if i < 6 { 1.0 } else { 0.0 })).collect();
            gradcheck(
                |t, v| {
                    let bound = p.with_nodes(v);
                    let logits = rse_forward(t, &cfg, &bound, ModelInput::Tokens { ids: &ids, batch: 1 }, 8)?;
                    t.softmax_xent(&logits, &labels, &mask)
                },
                &tensors,
                step,
            )
        }
        other => Err(Error::invalid(format!("unknown gradcheck suite `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_in_double_precision() {
        for name in all_suites() {
            let r = run_suite::<f64>(name, default_points(name), 0, default_step::<f64>()).unwrap();
            assert!(r.passes(default_tolerance(name)), "{name}: {:?}", r.worst);
            assert!(r.worst.coordinates > 0);
        }
    }

    #[test]
    fn single_precision_fails_an_impossible_threshold() {
        let r = run_suite::<f32>("gelu", 2, 0, default_step::<f32>()).unwrap();
        assert!(!r.passes(1e-9), "{:?}", r.worst);
        assert!(r.passes(5e-2), "{:?}", r.worst);
    }

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(run_suite::<f64>("softmax", 1, 0, 1e-6).is_err());
        assert!(!is_suite("softmax"));
        assert!(is_suite("gelu"));
    }
}
