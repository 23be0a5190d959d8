//! Mixed-precision radix-2 FFT with microscaling (MX) block quantization.
//!
//! The crate is organised bottom-up:
//!
//! - [`minifloat`]: scalar codec for small floating-point element formats
//!   (E4M3, E5M2, E2M3, E3M2, FP16).
//! - [`mxblock`]: blocks of real scalars sharing one power-of-two scale.
//! - [`prescale`]: global power-of-two input conditioning and its exact inverse.
//! - [`fftcore`]: decimation-in-time Cooley–Tukey FFT with MX, FP16 and FP64
//!   reference arithmetic.
//! - [`mri`]: multi-coil forward / round-trip pipelines, root-sum-square coil
//!   combination, synthetic phantoms and the MXCG grid file format.
//! - [`metrics`]: PSNR, SSIM and NMSE.

pub mod error;
pub mod fftcore;
pub mod metrics;
pub mod minifloat;
pub mod mri;
pub mod mxblock;
pub mod prescale;

pub use error::{Error, Result};
pub use fftcore::{Direction, FftPlan, Mode};
pub use metrics::MetricsReport;
pub use minifloat::MinifloatFormat;
pub use mri::{ComplexGrid, Domain, RssImage};
pub use mxblock::MxBlock;
pub use prescale::{PrescaleConfig, PrescaleResult};

/// Exact `2^k` as an `f64` for `k` in the normal exponent range.
#[inline]
pub(crate) fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// `floor(log2(a))` for a finite, strictly positive `a`, computed exactly from
/// the bit pattern.
#[inline]
pub(crate) fn floor_log2(a: f64) -> i32 {
    debug_assert!(a > 0.0 && a.is_finite());
    let bits = a.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // f64 subnormal
        let mant = bits & ((1u64 << 52) - 1);
        -1022 - (mant.leading_zeros() as i32 - 11)
    } else {
        biased - 1023
    }
}
