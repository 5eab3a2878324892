//! Residual Shuffle-Exchange networks.
//!
//! Sequence models with `O(n log n)` cost built from Switch Layers (a
//! learnable 2-to-2 unit applied to adjacent pairs) interleaved with perfect
//! shuffle permutations and wired into Beneš blocks. Weights are shared
//! across positions and layers, so one parameter set runs at any
//! power-of-two length.

pub mod cli;
pub mod error;
pub mod network;
pub mod numcore;
pub mod rng;
pub mod shuffle;
pub mod tasks;
pub mod train;
pub mod units;

pub use error::{Error, Result};
