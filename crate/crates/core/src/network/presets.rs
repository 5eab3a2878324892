use super::config::{HeadMode, InputKind, ModelConfig, DEFAULT_KERNEL_WIDTH};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Binary arithmetic and sorting: m = 192, two blocks, token input.
    Algorithmic,
    /// Music transcription shape: two strided convolutions, 128 note classes
    /// read from the center element.
    MusicnetShape,
    /// Word-prediction shape: 300-wide pretrained vectors in, one scalar per
    /// position out.
    LambadaShape,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Algorithmic, Preset::MusicnetShape, Preset::LambadaShape];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Algorithmic => "algorithmic",
            Preset::MusicnetShape => "musicnet_shape",
            Preset::LambadaShape => "lambada_shape",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown preset {name:?} (expected algorithmic, musicnet_shape or lambada_shape)")))
    }

    pub fn config(self) -> ModelConfig {
        match self {
            Preset::Algorithmic => ModelConfig::tokens(4, 4, 192, 2).with_n_max(64),
            Preset::MusicnetShape => ModelConfig::tokens(1, 128, 192, 2)
                .with_n_max(8192)
                .with_input(InputKind::Signal { conv_layers: 2, kernel_width: DEFAULT_KERNEL_WIDTH })
                .with_head(HeadMode::Center),
            Preset::LambadaShape => ModelConfig::tokens(1, 1, 384, 2)
                .with_n_max(128)
                .with_input(InputKind::Vectors { dim: 300 })
                .with_head(HeadMode::PositionScalar),
        }
    }
}
