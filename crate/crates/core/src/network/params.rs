use rand::Rng;

use super::config::{HeadMode, InputKind, ModelConfig, UnitKind};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Real, Tensor};
use crate::rng::{self, Stream};
use crate::units::{gated_su_init, rsu_init, UnitParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<P> {
    /// `[width, cin, cout]`
    pub kernel: P,
    /// `[cout]`
    pub bias: P,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputParams<P> {
    /// `[vocab, m]`
    Embedding { table: P },
    /// Strided convolutions then a `[channels, m]` lift. With no convolutions
    /// the lift maps the single input channel to `m`.
    Frontend { convs: Vec<ConvParams<P>>, lift_w: P, lift_b: P },
    /// `[dim, m]` projection of precomputed vectors.
    Projection { w: P, b: P },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<P> {
    /// Shared by every switch layer of the shuffle half.
    pub forward: UnitParams<P>,
    /// Shared by every switch layer of the inverse-shuffle half.
    pub reverse: UnitParams<P>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<P> {
    /// `[m, classes]`, or `[m, 1]` for the position-scalar head.
    pub weight: P,
    pub bias: P,
}

/// All learnable state of a model. Nothing here depends on the sequence
/// length, so one set of parameters runs at every power-of-two length.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<P> {
    pub input: InputParams<P>,
    pub blocks: Vec<BlockParams<P>>,
    pub final_layer: UnitParams<P>,
    pub head: HeadParams<P>,
}

impl<P> ModelParams<P> {
    pub fn map<Q>(&self, f: &mut dyn FnMut(&str, &P) -> Q) -> ModelParams<Q> {
        let input = match &self.input {
            InputParams::Embedding { table } => InputParams::Embedding { table: f("embedding", table) },
            InputParams::Frontend { convs, lift_w, lift_b } => InputParams::Frontend {
                convs: convs
                    .iter()
                    .enumerate()
                    .map(|(l, c)| ConvParams {
                        kernel: f(&format!("conv{l}.kernel"), &c.kernel),
                        bias: f(&format!("conv{l}.bias"), &c.bias),
                    })
                    .collect(),
                lift_w: f("lift.w", lift_w),
                lift_b: f("lift.b", lift_b),
            },
            InputParams::Projection { w, b } => InputParams::Projection {
                w: f("projection.w", w),
                b: f("projection.b", b),
            },
        };
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, blk)| BlockParams {
                forward: blk.forward.map(&format!("block{i}.forward"), f),
                reverse: blk.reverse.map(&format!("block{i}.reverse"), f),
            })
            .collect();
        ModelParams {
            input,
            blocks,
            final_layer: self.final_layer.map("final", f),
            head: HeadParams {
                weight: f("head.w", &self.head.weight),
                bias: f("head.b", &self.head.bias),
            },
        }
    }

    /// Visits every learnable tensor with its dotted name, in a fixed order.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a P)) {
        match &self.input {
            InputParams::Embedding { table } => f("embedding", table),
            InputParams::Frontend { convs, lift_w, lift_b } => {
                for (l, c) in convs.iter().enumerate() {
                    f(&format!("conv{l}.kernel"), &c.kernel);
                    f(&format!("conv{l}.bias"), &c.bias);
                }
                f("lift.w", lift_w);
                f("lift.b", lift_b);
            }
            InputParams::Projection { w, b } => {
                f("projection.w", w);
                f("projection.b", b);
            }
        }
        for (i, blk) in self.blocks.iter().enumerate() {
            blk.forward.visit(&format!("block{i}.forward"), f);
            blk.reverse.visit(&format!("block{i}.reverse"), f);
        }
        self.final_layer.visit("final", f);
        f("head.w", &self.head.weight);
        f("head.b", &self.head.bias);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut P)) {
        match &mut self.input {
            InputParams::Embedding { table } => f("embedding", table),
            InputParams::Frontend { convs, lift_w, lift_b } => {
                for (l, c) in convs.iter_mut().enumerate() {
                    f(&format!("conv{l}.kernel"), &mut c.kernel);
                    f(&format!("conv{l}.bias"), &mut c.bias);
                }
                f("lift.w", lift_w);
                f("lift.b", lift_b);
            }
            InputParams::Projection { w, b } => {
                f("projection.w", w);
                f("projection.b", b);
            }
        }
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            blk.forward.visit_mut(&format!("block{i}.forward"), f);
            blk.reverse.visit_mut(&format!("block{i}.reverse"), f);
        }
        self.final_layer.visit_mut("final", f);
        f("head.w", &mut self.head.weight);
        f("head.b", &mut self.head.bias);
    }

    pub fn unit_sets(&self) -> usize {
        2 * self.blocks.len() + 1
    }

    /// Same structure with the `i`-th tensor (in visit order) replaced by `nodes[i]`.
    pub fn with_nodes<N: Clone>(&self, nodes: &[N]) -> ModelParams<N> {
        let mut i = 0;
        self.map(&mut |_, _| {
            i += 1;
            nodes[i - 1].clone()
        })
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |name, _| names.push(name.to_string()));
        names
    }
}

impl<T: Real> ModelParams<Tensor<T>> {
    /// Registers every tensor as a differentiable leaf of `g`.
    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> ModelParams<G::Node> {
        self.map(&mut |_, t| g.param(t))
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_string(), t)));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Counts grouped by component: input, per-unit-set, final, head.
    pub fn breakdown(&self) -> Vec<(String, usize)> {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for (name, t) in self.named_tensors() {
            let group = match name.split('.').next().unwrap_or("") {
                g if g.starts_with("conv") || g == "lift" => "frontend".to_string(),
                g if g.starts_with("block") => {
                    let mut parts = name.split('.');
                    format!("{}.{}", parts.next().unwrap(), parts.next().unwrap_or(""))
                }
                g => g.to_string(),
            };
            match groups.iter_mut().find(|(g, _)| *g == group) {
                Some((_, n)) => *n += t.len(),
                None => groups.push((group, t.len())),
            }
        }
        groups
    }

    /// Parameters of the switch units only (blocks plus final layer).
    pub fn switch_unit_count(&self) -> usize {
        self.named_tensors()
            .iter()
            .filter(|(n, _)| n.starts_with("block") || n.starts_with("final"))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Replaces tensors by name, checking shapes. Every tensor must be supplied.
    pub fn load_named(&mut self, mut tensors: Vec<(String, Tensor<T>)>) -> Result<()> {
        let mut err = None;
        self.visit_mut(&mut |name, slot| {
            if err.is_some() {
                return;
            }
            match tensors.iter().position(|(n, _)| n == name) {
                Some(i) => {
                    let (_, t) = tensors.swap_remove(i);
                    if t.shape() != slot.shape() {
                        err = Some(Error::Checkpoint(format!(
                            "tensor {name}: stored shape {:?}, model expects {:?}",
                            t.shape(),
                            slot.shape()
                        )));
                    } else {
                        *slot = t;
                    }
                }
                None => err = Some(Error::Checkpoint(format!("tensor {name} missing"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some((name, _)) = tensors.first() {
            return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<Tensor<U>> {
        self.map(&mut |_, t| t.cast::<U>())
    }
}

fn init_unit<T: Real, R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<UnitParams<Tensor<T>>> {
    Ok(match cfg.unit {
        UnitKind::Residual => UnitParams::Residual(rsu_init(cfg.feature_maps, cfg.hidden, cfg.r, rng)?),
        UnitKind::Gated => UnitParams::Gated(gated_su_init(cfg.feature_maps, rng)?),
    })
}

fn linear<T: Real, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> (Tensor<T>, Tensor<T>) {
    let std = (1.0 / fan_in as f64).sqrt();
    (Tensor::uniform([fan_in, fan_out], std, rng), Tensor::zeros([fan_out]))
}

/// Initializes a model. The result depends only on `config` and `seed`;
/// `config.n_max` does not influence any parameter.
pub fn build_model<T: Real>(config: &ModelConfig, seed: u64) -> Result<ModelParams<Tensor<T>>> {
    config.validate()?;
    let m = config.feature_maps;
    let mut rng = rng::stream(seed, Stream::Init);
    let input = match config.input {
        InputKind::Tokens { vocab } => {
            // Embeddings start at the amplitude the switch units preserve.
            let table = Tensor::uniform([vocab, m], crate::units::SIGNAL_AMPLITUDE, &mut rng);
            InputParams::Embedding { table }
        }
        InputKind::Signal { kernel_width, .. } => {
            let mut cin = 1;
            let mut convs = Vec::new();
            for cout in config.conv_channels() {
                let std = (1.0 / (kernel_width * cin) as f64).sqrt();
                convs.push(ConvParams {
                    kernel: Tensor::uniform([kernel_width, cin, cout], std, &mut rng),
                    bias: Tensor::zeros([cout]),
                });
                cin = cout;
            }
            let (w, b) = linear(cin, m, &mut rng);
            InputParams::Frontend { convs, lift_w: w, lift_b: b }
        }
        InputKind::Vectors { dim } => {
            let (w, b) = linear(dim, m, &mut rng);
            InputParams::Projection { w, b }
        }
    };
    let mut blocks = Vec::with_capacity(config.blocks);
    for _ in 0..config.blocks {
        blocks.push(BlockParams {
            forward: init_unit(config, &mut rng)?,
            reverse: init_unit(config, &mut rng)?,
        });
    }
    let final_layer = init_unit(config, &mut rng)?;
    let out = match config.head {
        HeadMode::PositionScalar => 1,
        _ => config.classes,
    };
    let (weight, bias) = linear(m, out, &mut rng);
    Ok(ModelParams {
        input,
        blocks,
        final_layer,
        head: HeadParams { weight, bias },
    })
}
