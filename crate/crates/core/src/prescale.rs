//! Global power-of-two prescale.
//!
//! One exponent `k` is chosen for the whole input: `k1` places the peak
//! magnitude near `target`, `k2` lifts the `tau`-percentile of the nonzero
//! magnitudes up to `tau_min`. The larger of the two wins and is clipped to
//! `[k_min, k_max]`. Scaling by `2^k` is exact, so undoing it is too.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mri::ComplexGrid;
use crate::mxblock::ldexp;

/// Floor used in place of zero peaks or tails before taking `log2`.
pub const EPSILON: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrescaleConfig {
    pub target: f64,
    /// Tail percentile in (0, 100).
    pub tau: f64,
    pub tau_min: f64,
    pub k_min: i32,
    pub k_max: i32,
}

impl Default for PrescaleConfig {
    fn default() -> Self {
        Self {
            target: 1.0,
            tau: 1.0,
            tau_min: 2f64.powi(-20),
            k_min: -40,
            k_max: 40,
        }
    }
}

impl PrescaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target > 0.0 && self.target.is_finite()) {
            return Err(Error::ConfigError { field: "target", message: format!("must be positive, got {}", self.target) });
        }
        if !(self.tau > 0.0 && self.tau < 100.0) {
            return Err(Error::ConfigError { field: "tau", message: format!("must lie in (0, 100), got {}", self.tau) });
        }
        if !(self.tau_min > 0.0 && self.tau_min.is_finite()) {
            return Err(Error::ConfigError {
                field: "tau_min",
                message: format!("must be positive, got {}", self.tau_min),
            });
        }
        if self.k_min > self.k_max {
            return Err(Error::ConfigError {
                field: "k_min",
                message: format!("k_min {} exceeds k_max {}", self.k_min, self.k_max),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrescaleResult {
    /// Applied exponent.
    pub k: i32,
    pub a_max: f64,
    pub p_tau: f64,
    /// Exponent placing the peak at the target.
    pub k1: i32,
    /// Smallest exponent lifting the tail to the floor.
    pub k2: i32,
}

/// Prescale exponent for a whole multi-coil grid.
pub fn compute_prescale(x: &ComplexGrid, cfg: &PrescaleConfig) -> Result<PrescaleResult> {
    compute_prescale_values(x.data(), cfg)
}

/// Prescale exponent for a flat slice of samples.
pub fn compute_prescale_values(x: &[Complex64], cfg: &PrescaleConfig) -> Result<PrescaleResult> {
    cfg.validate()?;
    let mut mags = Vec::with_capacity(x.len());
    for z in x {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite sample {z}")));
        }
        let m = z.norm();
        if m > 0.0 {
            mags.push(m);
        }
    }
    let a_max = mags.iter().copied().fold(0.0, f64::max);
    let p_tau = percentile(&mut mags, cfg.tau);

    let k1 = (cfg.target / a_max.max(EPSILON)).log2().round() as i32;
    let k2 = (cfg.tau_min / p_tau.max(EPSILON)).log2().ceil() as i32;
    let k = k1.max(k2).clamp(cfg.k_min, cfg.k_max);
    Ok(PrescaleResult { k, a_max, p_tau, k1, k2 })
}

/// Percentile (0..100) with linear interpolation between order statistics.
/// Returns 0 for an empty slice. Sorts `values` in place.
pub fn percentile(values: &mut [f64], pct: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let pos = pct / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    let frac = pos - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}

/// Multiply every sample by exactly `2^k`.
pub fn apply_prescale(x: &ComplexGrid, k: i32) -> ComplexGrid {
    let mut out = x.clone();
    scale_in_place(out.data_mut(), k);
    out
}

/// Inverse of [`apply_prescale`].
pub fn undo_prescale(x: &ComplexGrid, k: i32) -> ComplexGrid {
    apply_prescale(x, -k)
}

pub(crate) fn scale_in_place(data: &mut [Complex64], k: i32) {
    if k == 0 {
        return;
    }
    for z in data {
        z.re = ldexp(z.re, k);
        z.im = ldexp(z.im, k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::Domain;

    fn grid(values: &[f64]) -> ComplexGrid {
        let n = (values.len() as f64).sqrt() as usize;
        let data = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        ComplexGrid::new(Domain::Image, 1, n, data).unwrap()
    }

    #[test]
    fn at_target_gives_zero() {
        let g = grid(&[1.0, 0.5, 0.25, 0.125]);
        let r = compute_prescale(&g, &PrescaleConfig::default()).unwrap();
        assert_eq!((r.k1, r.k), (0, 0));
        assert_eq!(r.a_max, 1.0);
    }

    #[test]
    fn quarter_peak_gives_two() {
        let g = grid(&[0.25, 0.1, 0.2, 0.05]);
        let r = compute_prescale(&g, &PrescaleConfig::default()).unwrap();
        assert_eq!(r.k1, 2);
        assert!(r.k2 < r.k1);
        assert_eq!(r.k, 2);
        let scaled = apply_prescale(&g, r.k);
        assert_eq!(scaled.data().iter().map(|z| z.norm()).fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn all_zero_input_clips() {
        let g = grid(&[0.0; 4]);
        let cfg = PrescaleConfig::default();
        let r = compute_prescale(&g, &cfg).unwrap();
        assert_eq!(r.a_max, 0.0);
        assert_eq!(r.p_tau, 0.0);
        // log2(1 / 1e-30) = 99.66 -> 100
        assert_eq!(r.k1, 100);
        assert_eq!(r.k, cfg.k_max);
    }

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&mut v, 50.0), 2.5);
        assert_eq!(percentile(&mut v, 0.0), 1.0);
        assert_eq!(percentile(&mut v, 100.0), 4.0);
        assert_eq!(percentile(&mut [], 10.0), 0.0);
        assert_eq!(percentile(&mut [7.0], 10.0), 7.0);
    }

    #[test]
    fn apply_and_undo_are_exact() {
        let g = grid(&[0.3, -1.7e-5, 12.25, 1.0 / 3.0]);
        assert_eq!(apply_prescale(&g, 0), g);
        let up = apply_prescale(&g, 3);
        assert_eq!(undo_prescale(&up, 3), g);
        assert_eq!(undo_prescale(&g, -3), up);
    }

    #[test]
    fn bad_config_is_reported() {
        let g = grid(&[1.0]);
        let cfg = PrescaleConfig { k_min: 5, k_max: 1, ..Default::default() };
        assert!(matches!(compute_prescale(&g, &cfg), Err(Error::ConfigError { field: "k_min", .. })));
        let cfg = PrescaleConfig { tau: 100.0, ..Default::default() };
        assert!(matches!(compute_prescale(&g, &cfg), Err(Error::ConfigError { field: "tau", .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let g = ComplexGrid::new_unchecked(Domain::Image, 1, 1, vec![Complex64::new(f64::NAN, 0.0)]);
        assert!(matches!(compute_prescale(&g, &PrescaleConfig::default()), Err(Error::InvalidValue(_))));
    }
}
