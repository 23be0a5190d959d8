//! Microscaling (MX) blocks: `B` real scalars stored as element-format values
//! sharing one power-of-two scale.
//!
//! Complex data is stored interleaved (`re0, im0, re1, im1, ...`) in a single
//! block so real and imaginary parts share the scale. Codes are kept as their
//! decoded element-format values rather than packed bit patterns.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::floor_log2;
use crate::minifloat::MinifloatFormat;

#[derive(Debug, Clone, PartialEq)]
pub struct MxBlock {
    codes: Vec<f64>,
    scale_exp: i32,
    fmt: MinifloatFormat,
}

impl MxBlock {
    /// Element-format values, one per real scalar.
    pub fn codes(&self) -> &[f64] {
        &self.codes
    }

    /// The shared scale `2^scale_exp`.
    pub fn scale(&self) -> f64 {
        ldexp(1.0, self.scale_exp)
    }

    pub fn scale_exp(&self) -> i32 {
        self.scale_exp
    }

    pub fn fmt(&self) -> MinifloatFormat {
        self.fmt
    }

    /// Number of real scalars `n`.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Decode as real scalars (`code * scale`).
    pub fn decode_real(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| ldexp(c, self.scale_exp)).collect()
    }

    /// The block with every imaginary code negated. Conjugation commutes with
    /// MX encoding since the element formats are sign-symmetric.
    pub fn conj(&self) -> Result<Self> {
        check_even(self.codes.len())?;
        let codes = self
            .codes
            .iter()
            .enumerate()
            .map(|(i, &c)| if i % 2 == 1 { -c } else { c })
            .collect();
        Ok(Self { codes, scale_exp: self.scale_exp, fmt: self.fmt })
    }
}

/// Scale exponent for a block whose largest magnitude is `amax`:
/// `floor(log2(amax)) - emax`, so the largest element lands in the element
/// format's top binade. Zero blocks get exponent 0.
pub fn shared_scale_exp(amax: f64, fmt: &MinifloatFormat) -> i32 {
    if amax == 0.0 {
        0
    } else {
        floor_log2(amax) - fmt.emax()
    }
}

/// Encode real scalars into one MX block.
pub fn encode_block_mx(values: &[f64], fmt: MinifloatFormat) -> Result<MxBlock> {
    let mut amax = 0.0f64;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::InvalidValue(format!("non-finite block element {v}")));
        }
        amax = amax.max(v.abs());
    }
    let scale_exp = shared_scale_exp(amax, &fmt);
    let codes = values.iter().map(|&v| fmt.round(ldexp(v, -scale_exp))).collect();
    Ok(MxBlock { codes, scale_exp, fmt })
}

/// Encode complex values, interleaved, into one MX block.
pub fn encode_complex_block_mx(values: &[Complex64], fmt: MinifloatFormat) -> Result<MxBlock> {
    let flat: Vec<f64> = values.iter().flat_map(|z| [z.re, z.im]).collect();
    encode_block_mx(&flat, fmt)
}

/// De-interleave a complex block into its real and imaginary element values.
/// The scale is not applied.
pub fn mantissas_block(block: &MxBlock) -> Result<(Vec<f64>, Vec<f64>)> {
    check_even(block.codes.len())?;
    let re = block.codes.iter().step_by(2).copied().collect();
    let im = block.codes.iter().skip(1).step_by(2).copied().collect();
    Ok((re, im))
}

/// Requantize mantissa-space values with a given scale exponent.
///
/// The caller must have renormalized so every `|p|` is at most the format's
/// `max_finite`; anything larger is reported as [`Error::MantissaOverflow`].
pub fn encode_from_mant_block(p_re: &[f64], p_im: &[f64], scale_exp: i32, fmt: MinifloatFormat) -> Result<MxBlock> {
    if p_re.len() != p_im.len() {
        return Err(Error::ShapeError(format!(
            "real/imag mantissa lengths differ: {} vs {}",
            p_re.len(),
            p_im.len()
        )));
    }
    let limit = fmt.max_finite();
    let mut codes = Vec::with_capacity(2 * p_re.len());
    for (&re, &im) in p_re.iter().zip(p_im) {
        for p in [re, im] {
            if p.is_nan() {
                return Err(Error::InvalidValue("NaN mantissa".into()));
            }
            if p.abs() > limit {
                return Err(Error::MantissaOverflow { value: p, limit });
            }
            codes.push(fmt.round(p));
        }
    }
    Ok(MxBlock { codes, scale_exp, fmt })
}

/// Decode an interleaved complex block: `(c[2j] + i c[2j+1]) * scale`.
pub fn decode_block_mx(block: &MxBlock) -> Result<Vec<Complex64>> {
    check_even(block.codes.len())?;
    Ok(block
        .codes
        .chunks_exact(2)
        .map(|c| Complex64::new(ldexp(c[0], block.scale_exp), ldexp(c[1], block.scale_exp)))
        .collect())
}

fn check_even(n: usize) -> Result<()> {
    if !n.is_multiple_of(2) {
        return Err(Error::ShapeError(format!("complex block needs an even length, got {n}")));
    }
    Ok(())
}

/// `x * 2^k`, exact whenever the result is a normal `f64`.
pub fn ldexp(mut x: f64, mut k: i32) -> f64 {
    while k > 1023 {
        x *= crate::pow2(1023);
        k -= 1023;
    }
    while k < -1022 {
        x *= crate::pow2(-1022);
        k += 1022;
    }
    x * crate::pow2(k)
}
