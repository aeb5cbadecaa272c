//! Phase-only hologram synthesis with pixel-unshuffle tiling.
//!
//! A target image is split into r x r interleaved tiles, the networks work at
//! 1/r resolution on the stacked tiles, and a small merge network restores
//! full resolution. Propagation uses a band-limited angular spectrum method.
//!
//! - [`wavefield`], [`propagation`]: complex fields and free-space transfer.
//! - [`tiling`]: pixel shuffle/unshuffle and the r = 4 grouping.
//! - [`autodiff`]: a tape-based reverse-mode engine with finite-difference checks.
//! - [`nnets`]: backbone, merge network, checkpoints.
//! - [`optimize`]: the end-to-end pipeline, training and iterative baselines.
//! - [`encoding`], [`metrics`], [`io`]: SLM phase maps, PSNR/SSIM/memory, files and config.
//! - [`commands`]: the `holotile` subcommands as library calls.

pub mod autodiff;
pub mod commands;
pub mod encoding;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod metrics;
pub mod nnets;
pub mod optimize;
pub mod propagation;
pub mod tiling;
pub mod wavefield;

pub use error::{Error, Result};
