//! Full model: input stage, Beneš blocks of switch and shuffle layers, a
//! final switch layer and an output head.
//!
//! Each block owns two switch-unit parameter sets, one shared by all switch
//! layers of its shuffle half and one by its inverse-shuffle half. No
//! parameter depends on the sequence length.

mod config;
mod forward;
mod params;
mod presets;
mod probe;

pub use config::{HeadMode, InputKind, ModelConfig, UnitKind, DEFAULT_KERNEL_WIDTH, DEFAULT_R};
pub use forward::{
    benes_block, body, conv_frontend, embed_input, forward_observed, output_head, rse_forward,
    switch_layer, Layer, LayerObserver, ModelInput, PositionalStructure, UnitSlot,
};
pub use params::{build_model, BlockParams, ConvParams, HeadParams, InputParams, ModelParams};
pub use presets::Preset;
pub use probe::{jacobian_position_norms, switch_layer_amplitudes};
