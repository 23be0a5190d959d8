//! Parametric minifloat element formats.
//!
//! A format is described by its exponent width `E`, mantissa width `M`, bias
//! and the policy for reserved (non-finite) codes. All arithmetic is done in
//! `f64`, which represents every value of every supported format exactly.
//!
//! Rounding is round-to-nearest, ties-to-even. Magnitudes above the largest
//! finite value saturate; no infinities are ever produced.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::{floor_log2, pow2};

/// Canonical names accepted by [`MinifloatFormat::from_name`].
pub const REGISTRY: [&str; 5] = ["e4m3", "e5m2", "e2m3", "e3m2", "fp16"];

/// How the top of the code space is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecialValues {
    /// Every code is finite (MXFP6 element formats).
    AllFinite,
    /// Only the all-ones exponent with all-ones mantissa is NaN; no infinities
    /// (OCP FP8 E4M3).
    NanOnly,
    /// The all-ones exponent is reserved for infinities and NaN (IEEE-like,
    /// E5M2 and FP16).
    Ieee,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinifloatFormat {
    exponent_bits: u32,
    mantissa_bits: u32,
    bias: i32,
    specials: SpecialValues,
    max_finite: f64,
    min_subnormal: f64,
    emax: i32,
}

impl MinifloatFormat {
    pub const E4M3: Self = Self::build(4, 3, 7, SpecialValues::NanOnly);
    pub const E5M2: Self = Self::build(5, 2, 15, SpecialValues::Ieee);
    pub const E2M3: Self = Self::build(2, 3, 1, SpecialValues::AllFinite);
    pub const E3M2: Self = Self::build(3, 2, 3, SpecialValues::AllFinite);
    pub const FP16: Self = Self::build(5, 10, 15, SpecialValues::Ieee);

    const fn build(exponent_bits: u32, mantissa_bits: u32, bias: i32, specials: SpecialValues) -> Self {
        let top_field = (1i32 << exponent_bits) - 1;
        let emax = match specials {
            SpecialValues::Ieee => top_field - 1 - bias,
            SpecialValues::AllFinite | SpecialValues::NanOnly => top_field - bias,
        };
        // Largest mantissa field value allowed at emax.
        let top_mant = match specials {
            SpecialValues::NanOnly => (1u64 << mantissa_bits) - 2,
            SpecialValues::AllFinite | SpecialValues::Ieee => (1u64 << mantissa_bits) - 1,
        };
        let significand = ((1u64 << mantissa_bits) + top_mant) as f64;
        let max_finite = significand * pow2_const(emax - mantissa_bits as i32);
        let min_subnormal = pow2_const(1 - bias - mantissa_bits as i32);
        Self {
            exponent_bits,
            mantissa_bits,
            bias,
            specials,
            max_finite,
            min_subnormal,
            emax,
        }
    }

    /// A storage format of at most 16 bits with the default bias `2^(E-1) - 1`.
    pub fn new(exponent_bits: u32, mantissa_bits: u32, specials: SpecialValues) -> Result<Self> {
        if 1 + exponent_bits + mantissa_bits > 16 {
            return Err(Error::InvalidFormat(format!(
                "code width 1+{exponent_bits}+{mantissa_bits} exceeds 16 bits"
            )));
        }
        Self::widened(exponent_bits, mantissa_bits, specials)
    }

    /// Like [`MinifloatFormat::new`] but without the 16-bit width limit.
    ///
    /// Used for precision-convergence studies (e.g. an E8M23 element format
    /// should make the MX butterfly agree with exact arithmetic). Such formats
    /// cannot be enumerated.
    pub fn widened(exponent_bits: u32, mantissa_bits: u32, specials: SpecialValues) -> Result<Self> {
        if !(2..=8).contains(&exponent_bits) {
            return Err(Error::InvalidFormat(format!("exponent bits {exponent_bits} outside 2..=8")));
        }
        if !(1..=40).contains(&mantissa_bits) {
            return Err(Error::InvalidFormat(format!("mantissa bits {mantissa_bits} outside 1..=40")));
        }
        let bias = (1i32 << (exponent_bits - 1)) - 1;
        Ok(Self::build(exponent_bits, mantissa_bits, bias, specials))
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "e4m3" => Ok(Self::E4M3),
            "e5m2" => Ok(Self::E5M2),
            "e2m3" => Ok(Self::E2M3),
            "e3m2" => Ok(Self::E3M2),
            "fp16" => Ok(Self::FP16),
            _ => Err(Error::UnknownFormat {
                name: name.to_string(),
                known: REGISTRY.join(", "),
            }),
        }
    }

    /// Canonical registry name, or `eXmY` for formats outside the registry.
    pub fn name(&self) -> String {
        for n in REGISTRY {
            if Self::from_name(n).ok().as_ref() == Some(self) {
                return n.to_string();
            }
        }
        format!("e{}m{}", self.exponent_bits, self.mantissa_bits)
    }

    pub fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn bias(&self) -> i32 {
        self.bias
    }

    pub fn specials(&self) -> SpecialValues {
        self.specials
    }

    pub fn code_width(&self) -> u32 {
        1 + self.exponent_bits + self.mantissa_bits
    }

    pub fn max_finite(&self) -> f64 {
        self.max_finite
    }

    pub fn min_subnormal(&self) -> f64 {
        self.min_subnormal
    }

    pub fn min_normal(&self) -> f64 {
        pow2(self.emin())
    }

    /// Largest unbiased exponent of a finite normal value.
    pub fn emax(&self) -> i32 {
        self.emax
    }

    /// Smallest unbiased exponent of a normal value.
    pub fn emin(&self) -> i32 {
        1 - self.bias
    }

    /// Spacing of representable values in the binade containing `x`
    /// (the subnormal spacing below the normal range).
    pub fn ulp(&self, x: f64) -> f64 {
        let a = x.abs();
        let e = if a == 0.0 { self.emin() } else { floor_log2(a).max(self.emin()) };
        pow2(e - self.mantissa_bits as i32)
    }

    /// Round `value` to the nearest representable value (ties to even),
    /// saturating at `±max_finite`.
    pub fn quantize(&self, value: f64) -> Result<f64> {
        if value.is_nan() {
            return Err(Error::InvalidValue("cannot quantize NaN".into()));
        }
        Ok(self.round(value))
    }

    /// [`quantize`](Self::quantize) without the NaN check; NaN propagates.
    #[inline]
    pub fn round(&self, value: f64) -> f64 {
        let a = value.abs();
        if a.is_nan() {
            return value;
        }
        if a >= self.max_finite {
            return self.max_finite.copysign(value);
        }
        if a == 0.0 {
            return value;
        }
        let m = self.mantissa_bits as i32;
        let e = floor_log2(a).max(self.emin());
        let q = (a * pow2(m - e)).round_ties_even() * pow2(e - m);
        q.min(self.max_finite).copysign(value)
    }

    /// Decode a raw code (sign, exponent, mantissa fields). `None` for codes
    /// reserved for infinities or NaN.
    pub fn decode_code(&self, code: u32) -> Option<f64> {
        let m_bits = self.mantissa_bits;
        let e_bits = self.exponent_bits;
        let mant = code & ((1 << m_bits) - 1);
        let exp_field = (code >> m_bits) & ((1 << e_bits) - 1);
        let negative = (code >> (m_bits + e_bits)) & 1 == 1;
        let top = (1 << e_bits) - 1;
        match self.specials {
            SpecialValues::Ieee if exp_field == top => return None,
            SpecialValues::NanOnly if exp_field == top && mant == (1 << m_bits) - 1 => return None,
            _ => {}
        }
        let magnitude = if exp_field == 0 {
            mant as f64 * self.min_subnormal
        } else {
            let significand = ((1u64 << m_bits) + mant as u64) as f64;
            significand * pow2(exp_field as i32 - self.bias - m_bits as i32)
        };
        Some(if negative { -magnitude } else { magnitude })
    }

    /// Every finite representable value, ascending, with `±0` collapsed.
    ///
    /// Panics for formats wider than 16 bits.
    pub fn enumerate_values(&self) -> Vec<f64> {
        assert!(self.code_width() <= 16, "cannot enumerate a {}-bit format", self.code_width());
        let mut values: Vec<f64> = (0..1u32 << self.code_width())
            .filter_map(|c| self.decode_code(c))
            .map(|v| if v == 0.0 { 0.0 } else { v })
            .collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        values
    }
}

impl fmt::Display for MinifloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for MinifloatFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s)
    }
}

const fn pow2_const(k: i32) -> f64 {
    f64::from_bits(((k + 1023) as u64) << 52)
}
