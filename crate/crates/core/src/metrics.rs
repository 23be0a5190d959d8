//! Image-quality metrics over RSS magnitude images.
//!
//! PSNR uses the reference maximum as its peak. SSIM is the mean of local
//! SSIM over every fully-contained 11x11 Gaussian window (sigma 1.5) with
//! `K1 = 0.01`, `K2 = 0.03` and dynamic range `max(ref) - min(ref)`.

use crate::error::{Error, Result};
use crate::mri::RssImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub nmse: f64,
}

impl MetricsReport {
    pub fn compute(reference: &RssImage, test: &RssImage) -> Result<Self> {
        Ok(Self {
            psnr_db: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            nmse: nmse(reference, test)?,
        })
    }
}

fn check_pair(reference: &RssImage, test: &RssImage) -> Result<()> {
    if reference.n() != test.n() {
        return Err(Error::ShapeError(format!("image sizes differ: {} vs {}", reference.n(), test.n())));
    }
    if reference.pixels().iter().all(|&p| p == 0.0) {
        return Err(Error::DegenerateReference);
    }
    Ok(())
}

fn squared_error(reference: &RssImage, test: &RssImage) -> f64 {
    reference.pixels().iter().zip(test.pixels()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `20 log10(max(ref) / rmse)`; `+inf` when the images are identical.
pub fn psnr(reference: &RssImage, test: &RssImage) -> Result<f64> {
    check_pair(reference, test)?;
    let mse = squared_error(reference, test) / reference.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.pixels().iter().copied().fold(0.0, f64::max);
    Ok(20.0 * (peak / mse.sqrt()).log10())
}

/// `||ref - test||^2 / ||ref||^2`.
pub fn nmse(reference: &RssImage, test: &RssImage) -> Result<f64> {
    check_pair(reference, test)?;
    let energy: f64 = reference.pixels().iter().map(|p| p * p).sum();
    Ok(squared_error(reference, test) / energy)
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let centre = (size / 2) as f64;
    let taps: Vec<f64> = (0..size).map(|i| (-((i as f64 - centre).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable "valid" filtering of an `n x n` image: output is
/// `(n - w + 1)^2`.
fn filter_valid(img: &[f64], n: usize, taps: &[f64]) -> Vec<f64> {
    let w = taps.len();
    let m = n - w + 1;
    let mut rows = vec![0.0; n * m];
    for r in 0..n {
        for c in 0..m {
            rows[r * m + c] = taps.iter().enumerate().map(|(k, t)| t * img[r * n + c + k]).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            out[r * m + c] = taps.iter().enumerate().map(|(k, t)| t * rows[(r + k) * m + c]).sum();
        }
    }
    out
}

/// Mean structural similarity.
pub fn ssim(reference: &RssImage, test: &RssImage) -> Result<f64> {
    check_pair(reference, test)?;
    let n = reference.n();
    if n < SSIM_WINDOW {
        return Err(Error::WindowTooLarge { side: n, window: SSIM_WINDOW });
    }
    let x = reference.pixels();
    let y = test.pixels();
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);

    let taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, n, &taps);
    let mu_y = filter_valid(y, n, &taps);
    let e_xx = filter_valid(&xx, n, &taps);
    let e_yy = filter_valid(&yy, n, &taps);
    let e_xy = filter_valid(&xy, n, &taps);

    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            s.clamp(-1.0, 1.0)
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}
