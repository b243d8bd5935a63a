//! Distortion, rate-distortion loss, Bjøntegaard delta rate and per-frame
//! bit-allocation reports.

mod bd_rate;
mod distortion;
mod format;
mod ms_ssim;
mod report;

pub use bd_rate::{aggregate_bd_rates, bd_rate, parse_rd_csv, write_rd_csv, BdAggregate, BdEntry, RdPoint};
pub use distortion::{mse, psnr, psnr_from_mse};
pub use format::{format_sig6, parse_real};
pub use ms_ssim::{ms_ssim, ms_ssim_with_peak, MS_SSIM_MIN_SIDE, MS_SSIM_WEIGHTS};
pub use report::{
    bit_allocation_report, compare_reports, parse_stats_csv, write_stats_csv, BitAllocationReport,
    FrameDelta, ReportComparison,
};

/// Distortion metric a model is optimized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityMetric {
    Psnr,
    MsSsim,
}

/// λ values of the MSE-optimized models.
pub const LAMBDAS: [f64; 4] = [256.0, 512.0, 1024.0, 2048.0];

/// λ grid for a metric. MS-SSIM models use the MSE grid divided by 50.
pub fn lambda_grid(metric: QualityMetric) -> [f64; 4] {
    match metric {
        QualityMetric::Psnr => LAMBDAS,
        QualityMetric::MsSsim => LAMBDAS.map(|l| l / 50.0),
    }
}

/// `rate + lambda · distortion`. Inputs are expected finite with `lambda > 0`.
pub fn rd_loss(rate_bpp: f64, distortion: f64, lambda: f64) -> f64 {
    rate_bpp + lambda * distortion
}
