//! Image quality, timing and memory accounting.

pub mod ledger;
mod quality;
mod timing;

pub use ledger::{LedgerReport, LedgerRow, MemoryLedger, Stage};
pub use quality::{
    gaussian_taps, mse, psnr, psnr_channels, ssim, ssim_components, SsimComponents, SSIM_K1, SSIM_K2,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use timing::{stopwatch, Timing};
