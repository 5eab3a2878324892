use super::config::{HeadMode, InputKind, ModelConfig};
use super::params::{HeadParams, InputParams, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Real, Tensor, LAYERNORM_EPS};
use crate::shuffle::{log2_exact, Direction, ShuffleSpec};
use crate::units::{unit_forward, AblationFlags, UnitParams};

/// Which shared parameter set a switch layer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitSlot {
    Forward(usize),
    Reverse(usize),
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Switch(UnitSlot),
    Shuffle,
    InverseShuffle,
}

/// Layer schedule of the body at length `n = 2^k`: per block
/// `(switch, shuffle)^(k−1)` then `(switch, inverse shuffle)^(k−1)`, and one
/// final switch layer after the last block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionalStructure {
    pub n: usize,
    pub layers: Vec<Layer>,
}

impl PositionalStructure {
    pub fn new(n: usize, blocks: usize) -> Result<Self> {
        let k = log2_exact(n)? as usize;
        if k < 2 {
            return Err(Error::invalid(format!("Beneš blocks need n >= 4, got {n}")));
        }
        let mut layers = Vec::with_capacity(blocks * 4 * (k - 1) + 1);
        for b in 0..blocks {
            for _ in 0..k - 1 {
                layers.push(Layer::Switch(UnitSlot::Forward(b)));
                layers.push(Layer::Shuffle);
            }
            for _ in 0..k - 1 {
                layers.push(Layer::Switch(UnitSlot::Reverse(b)));
                layers.push(Layer::InverseShuffle);
            }
        }
        layers.push(Layer::Switch(UnitSlot::Final));
        Ok(Self { n, layers })
    }

    pub fn switch_layers(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Switch(_))).count()
    }
}

/// Called with `(switch layer index, output)` after every switch layer.
pub type LayerObserver<'a, T> = &'a mut dyn FnMut(usize, &Tensor<T>);

/// Applies one switch unit to every adjacent pair `(x[2j], x[2j+1])` of a
/// `[.., n, m]` sequence.
pub fn switch_layer<T: Real, G: Graph<T>>(
    g: &mut G,
    unit: &UnitParams<G::Node>,
    x: &G::Node,
    flags: &AblationFlags,
) -> Result<G::Node> {
    let shape = g.value(x).shape().to_vec();
    if shape.len() < 2 {
        return Err(Error::dim(format!("switch layer needs [.., n, m], got {shape:?}")));
    }
    let (n, m) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if n % 2 != 0 {
        return Err(Error::invalid(format!("switch layer needs an even length, got {n}")));
    }
    let mut paired = shape.clone();
    paired[shape.len() - 2] = n / 2;
    paired[shape.len() - 1] = 2 * m;
    let rows = g.value(x).len() / (2 * m);
    if !g.retains_intermediates() && rows > CHUNK_ROWS {
        // Units act on each pair independently; chunking keeps the hidden
        // activations of long sequences in cache.
        let len = g.value(x).len();
        let mut out = Vec::with_capacity(len);
        for start in (0..len).step_by(CHUNK_ROWS * 2 * m) {
            let chunk = g.value(x).data()[start..len.min(start + CHUNK_ROWS * 2 * m)].to_vec();
            let piece = g.constant(Tensor::new([chunk.len() / (2 * m), 2 * m], chunk)?);
            let y = unit_forward(g, unit, &piece, flags)?;
            out.extend_from_slice(g.value(&y).data());
        }
        return Ok(g.constant(Tensor::new(shape, out)?));
    }
    let pairs = g.reshape(x, &paired)?;
    let out = unit_forward(g, unit, &pairs, flags)?;
    drop(pairs);
    g.reshape(&out, &shape)
}

const CHUNK_ROWS: usize = 256;

fn slot<'a, P>(params: &'a ModelParams<P>, s: UnitSlot) -> &'a UnitParams<P> {
    match s {
        UnitSlot::Forward(b) => &params.blocks[b].forward,
        UnitSlot::Reverse(b) => &params.blocks[b].reverse,
        UnitSlot::Final => &params.final_layer,
    }
}

fn run_layers<T: Real, G: Graph<T>>(
    g: &mut G,
    layers: &[Layer],
    unit: &dyn Fn(UnitSlot) -> UnitParams<G::Node>,
    x: G::Node,
    flags: &AblationFlags,
    first_switch: usize,
    mut observer: Option<LayerObserver<'_, T>>,
) -> Result<G::Node> {
    let n = g.value(&x).shape()[g.value(&x).rank() - 2];
    let fwd = ShuffleSpec::for_length(n, Direction::Forward)?.permutation();
    let inv = ShuffleSpec::for_length(n, Direction::Inverse)?.permutation();
    let mut x = x;
    let mut switch_index = first_switch;
    for layer in layers {
        x = match *layer {
            Layer::Switch(s) => {
                let y = switch_layer(g, &unit(s), &x, flags)?;
                if let Some(obs) = observer.as_mut() {
                    obs(switch_index, g.value(&y));
                }
                switch_index += 1;
                y
            }
            Layer::Shuffle => g.permute_seq(&x, &fwd)?,
            Layer::InverseShuffle => g.permute_seq(&x, &inv)?,
        };
    }
    Ok(x)
}

/// One Beneš block over a `[.., n, m]` sequence with `n = 2^k`, `k >= 2`.
pub fn benes_block<T: Real, G: Graph<T>>(
    g: &mut G,
    forward_half: &UnitParams<G::Node>,
    reverse_half: &UnitParams<G::Node>,
    x: &G::Node,
    flags: &AblationFlags,
) -> Result<G::Node> {
    let value = g.value(x);
    if value.rank() < 2 {
        return Err(Error::dim(format!("Beneš block needs [.., n, m], got {:?}", value.shape())));
    }
    let n = value.shape()[value.rank() - 2];
    let mut plan = PositionalStructure::new(n, 1)?;
    plan.layers.pop();
    let unit = |s: UnitSlot| match s {
        UnitSlot::Forward(_) => forward_half.clone(),
        _ => reverse_half.clone(),
    };
    run_layers(g, &plan.layers, &unit, x.clone(), flags, 0, None)
}

/// The shuffle-exchange body: every block, then the final switch layer.
pub fn body<T: Real, G: Graph<T>>(
    g: &mut G,
    params: &ModelParams<G::Node>,
    x: G::Node,
    flags: &AblationFlags,
    observer: Option<LayerObserver<'_, T>>,
) -> Result<G::Node> {
    let value = g.value(&x);
    if value.rank() < 2 {
        return Err(Error::dim(format!("body needs [.., n, m], got {:?}", value.shape())));
    }
    let n = value.shape()[value.rank() - 2];
    let plan = PositionalStructure::new(n, params.blocks.len())?;
    let unit = |s: UnitSlot| slot(params, s).clone();
    run_layers(g, &plan.layers, &unit, x, flags, 0, observer)
}

/// Strided convolutions (LayerNorm and GELU after each) and a linear lift to
/// `m`, over `[.., n, 1]` samples.
pub fn conv_frontend<T: Real, G: Graph<T>>(
    g: &mut G,
    params: &InputParams<G::Node>,
    x: &G::Node,
) -> Result<G::Node> {
    let InputParams::Frontend { convs, lift_w, lift_b } = params else {
        return Err(Error::invalid("conv_frontend needs frontend parameters"));
    };
    let value = g.value(x);
    if value.rank() < 2 || value.rank() > 3 {
        return Err(Error::dim(format!("conv frontend input must be [n, 1] or [b, n, 1], got {:?}", value.shape())));
    }
    let n = value.shape()[value.rank() - 2];
    if n % (1 << convs.len()) != 0 {
        return Err(Error::invalid(format!(
            "length {n} is not divisible by 2^{} for the strided frontend",
            convs.len()
        )));
    }
    let mut h = x.clone();
    for c in convs {
        let y = g.conv1d(&h, &c.kernel, &c.bias, 2)?;
        let y = g.layernorm(&y, LAYERNORM_EPS);
        h = g.gelu(&y);
    }
    g.affine(&h, lift_w, Some(lift_b))
}

pub fn output_head<T: Real, G: Graph<T>>(
    g: &mut G,
    head: &HeadParams<G::Node>,
    mode: HeadMode,
    x: &G::Node,
) -> Result<G::Node> {
    match mode {
        HeadMode::PerSymbol => g.affine(x, &head.weight, Some(&head.bias)),
        HeadMode::Center => {
            let value = g.value(x);
            if value.rank() < 2 {
                return Err(Error::dim("center head needs [.., n, m]"));
            }
            let n = value.shape()[value.rank() - 2];
            let mid = g.select_position(x, n / 2)?;
            g.affine(&mid, &head.weight, Some(&head.bias))
        }
        HeadMode::PositionScalar => {
            let y = g.affine(x, &head.weight, Some(&head.bias))?;
            let shape = g.value(&y).shape().to_vec();
            g.reshape(&y, &shape[..shape.len() - 1])
        }
    }
}

/// Raw model input for a batch.
#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a, T> {
    /// `batch` rows of equal length, concatenated. Rows shorter than `n` are
    /// right-padded with id 0.
    Tokens { ids: &'a [usize], batch: usize },
    /// `[b, len]` or `[b, len, 1]` samples, zero-padded to `n`.
    Signal(&'a Tensor<T>),
    /// `[b, len, dim]` vectors, zero-padded to `n`.
    Vectors(&'a Tensor<T>),
}

fn pad_rows<T: Real>(t: &Tensor<T>, feat: usize, n: usize) -> Result<Tensor<T>> {
    let b = t.shape()[0];
    let len = t.len() / (b * feat);
    if len > n {
        return Err(Error::invalid(format!("input length {len} exceeds model length {n}")));
    }
    if len == n {
        return t.clone().reshape([b, n, feat]);
    }
    let mut data = vec![T::zero(); b * n * feat];
    for (src, dst) in t.data().chunks_exact(len * feat).zip(data.chunks_exact_mut(n * feat)) {
        dst[..len * feat].copy_from_slice(src);
    }
    Tensor::new([b, n, feat], data)
}

/// Maps raw input to the `[b, n', m]` sequence the body consumes.
pub fn embed_input<T: Real, G: Graph<T>>(
    g: &mut G,
    config: &ModelConfig,
    params: &ModelParams<G::Node>,
    input: ModelInput<'_, T>,
    n: usize,
) -> Result<G::Node> {
    log2_exact(n)?;
    match (input, &params.input) {
        (ModelInput::Tokens { ids, batch }, InputParams::Embedding { table }) => {
            if batch == 0 || ids.len() % batch != 0 {
                return Err(Error::dim(format!("{} ids do not split into {batch} rows", ids.len())));
            }
            let len = ids.len() / batch;
            if len > n {
                return Err(Error::invalid(format!("input length {len} exceeds model length {n}")));
            }
            let mut padded = vec![0usize; batch * n];
            for (src, dst) in ids.chunks_exact(len.max(1)).zip(padded.chunks_exact_mut(n)) {
                dst[..len].copy_from_slice(src);
            }
            g.embedding(table, &padded, &[batch, n])
        }
        (ModelInput::Signal(t), InputParams::Frontend { .. }) => {
            if t.rank() == 3 && t.features() != 1 {
                return Err(Error::dim(format!("signal must have one channel, got {:?}", t.shape())));
            }
            let x = g.constant(pad_rows(t, 1, n)?);
            conv_frontend(g, &params.input, &x)
        }
        (ModelInput::Vectors(t), InputParams::Projection { w, b }) => {
            let InputKind::Vectors { dim } = config.input else {
                return Err(Error::invalid("vector input for a non-vector model"));
            };
            if t.rank() != 3 || t.features() != dim {
                return Err(Error::dim(format!("expected [b, len, {dim}] vectors, got {:?}", t.shape())));
            }
            let x = g.constant(pad_rows(t, dim, n)?);
            g.affine(&x, w, Some(b))
        }
        _ => Err(Error::invalid("input kind does not match the model's input parameters")),
    }
}

/// Full model at padded length `n`: input stage, Beneš blocks, final switch
/// layer, head.
pub fn rse_forward<T: Real, G: Graph<T>>(
    g: &mut G,
    config: &ModelConfig,
    params: &ModelParams<G::Node>,
    input: ModelInput<'_, T>,
    n: usize,
) -> Result<G::Node> {
    forward_observed(g, config, params, input, n, None)
}

pub fn forward_observed<T: Real, G: Graph<T>>(
    g: &mut G,
    config: &ModelConfig,
    params: &ModelParams<G::Node>,
    input: ModelInput<'_, T>,
    n: usize,
    observer: Option<LayerObserver<'_, T>>,
) -> Result<G::Node> {
    let x = embed_input(g, config, params, input, n)?;
    let y = body(g, params, x, &config.flags, observer)?;
    output_head(g, &params.head, config.head, &y)
}
