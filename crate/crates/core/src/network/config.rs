use crate::error::{Error, Result};
use crate::units::AblationFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    /// Residual switch unit.
    Residual,
    /// Gated (GRU-like) baseline switch unit.
    Gated,
}

/// How raw input reaches the `m`-wide sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    /// Symbol ids through an embedding table; id 0 is padding.
    Tokens { vocab: usize },
    /// Scalar samples through `conv_layers` stride-2 convolutions (LayerNorm
    /// and GELU after each) and a linear lift to `m`.
    Signal { conv_layers: usize, kernel_width: usize },
    /// Precomputed `dim`-wide vectors (e.g. frozen word embeddings) through a
    /// linear projection to `m`.
    Vectors { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    /// `[n, classes]` logits, one distribution per position.
    PerSymbol,
    /// `[classes]` logits from the element at 0-based index `n/2`.
    Center,
    /// `[n]` scalars for a softmax over positions.
    PositionScalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_maps: usize,
    pub blocks: usize,
    /// Largest padded length the model is expected to run at.
    pub n_max: usize,
    pub input: InputKind,
    pub classes: usize,
    pub head: HeadMode,
    pub unit: UnitKind,
    pub flags: AblationFlags,
    /// RSU hidden width.
    pub hidden: usize,
    /// Residual init constant: `sigmoid(S) = r`, `h = sqrt(1 − r²)·0.25`.
    pub r: f64,
}

pub const DEFAULT_R: f64 = 0.9;
pub const DEFAULT_KERNEL_WIDTH: usize = 4;

impl ModelConfig {
    /// Token-in, per-symbol-classes-out model with the default RSU.
    pub fn tokens(vocab: usize, classes: usize, feature_maps: usize, blocks: usize) -> Self {
        Self {
            feature_maps,
            blocks,
            n_max: 4096,
            input: InputKind::Tokens { vocab },
            classes,
            head: HeadMode::PerSymbol,
            unit: UnitKind::Residual,
            flags: AblationFlags::default(),
            hidden: 4 * feature_maps,
            r: DEFAULT_R,
        }
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn with_flags(mut self, flags: AblationFlags) -> Self {
        self.flags = flags;
        self
    }

    pub fn with_unit(mut self, unit: UnitKind) -> Self {
        self.unit = unit;
        self
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_input(mut self, input: InputKind) -> Self {
        self.input = input;
        self
    }

    pub fn with_head(mut self, head: HeadMode) -> Self {
        self.head = head;
        self
    }

    pub fn conv_layers(&self) -> usize {
        match self.input {
            InputKind::Signal { conv_layers, .. } => conv_layers,
            _ => 0,
        }
    }

    /// Sequence length seen by the shuffle-exchange body for input length `n`.
    pub fn body_length(&self, n: usize) -> usize {
        n >> self.conv_layers()
    }

    /// Output channels of each frontend convolution: a geometric ramp ending at `m`.
    pub fn conv_channels(&self) -> Vec<usize> {
        let c = self.conv_layers();
        (0..c)
            .map(|l| (self.feature_maps >> (c - 1 - l)).max(1))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("model config: {msg}")));
        if self.feature_maps == 0 {
            return bad("feature_maps must be positive".into());
        }
        if self.blocks == 0 {
            return bad("need at least one Beneš block".into());
        }
        if !self.n_max.is_power_of_two() || self.n_max < 4 {
            return bad(format!("n_max={} must be a power of two >= 4", self.n_max));
        }
        if self.hidden == 0 {
            return bad("hidden size must be positive".into());
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return bad(format!("r={} must lie in (0, 1)", self.r));
        }
        if self.classes == 0 {
            return bad("classes must be positive".into());
        }
        if self.unit == UnitKind::Gated && self.feature_maps % 2 != 0 {
            return bad("the gated unit needs an even feature count".into());
        }
        match self.input {
            InputKind::Tokens { vocab } if vocab == 0 => return bad("vocab must be positive".into()),
            InputKind::Vectors { dim } if dim == 0 => return bad("vector dim must be positive".into()),
            InputKind::Signal { kernel_width, .. } if kernel_width == 0 => {
                return bad("kernel width must be positive".into())
            }
            InputKind::Signal { conv_layers, .. } if self.n_max >> conv_layers < 4 => {
                return bad(format!(
                    "{conv_layers} stride-2 convolutions leave fewer than 4 elements of n_max={}",
                    self.n_max
                ))
            }
            _ => {}
        }
        Ok(())
    }
}
