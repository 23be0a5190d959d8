//! Radix-2 decimation-in-time FFT with three arithmetic modes.
//!
//! * [`Mode::Reference`]: plain FP64 butterflies.
//! * [`Mode::Fp16`]: FP16 inputs, twiddles and complex multiplies, FP32
//!   butterfly add/sub, FP16 outputs.
//! * [`Mode::Mx`]: the twiddle product `w * v` of each butterfly is computed
//!   on MX blocks in mantissa space and requantized; `u` and the stage outputs
//!   are carried in FP32.
//!
//! In MX mode the butterflies of a stage are taken in their natural order
//! (group start outer, offset inner) and packed `B / 2` at a time into one
//! block; a group never spans two stages and the last group of a stage may be
//! short. Twiddle blocks are encoded once when the plan is built.
//!
//! No transform normalizes; callers apply `1/n` (or `1/N^2`) themselves.

use std::f64::consts::PI;
use std::fmt;

use num_complex::{Complex, Complex32, Complex64};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::minifloat::MinifloatFormat;
use crate::mxblock::{
    decode_block_mx, encode_block_mx, encode_complex_block_mx, encode_from_mant_block, ldexp, mantissas_block,
    shared_scale_exp, MxBlock,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// FP64 arithmetic throughout.
    Reference,
    /// FP16 positive control.
    Fp16,
    /// MX-scaled butterflies with `block_size` real scalars per block.
    Mx { fmt: MinifloatFormat, block_size: usize },
}

impl Mode {
    pub fn mx(fmt: MinifloatFormat, block_size: usize) -> Self {
        Mode::Mx { fmt, block_size }
    }

    /// Parse a mode name: `reference`, `fp16`, or an element format from the
    /// minifloat registry (which selects MX mode with `block_size`).
    pub fn parse(name: &str, block_size: usize) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "reference" | "ref" | "fp64" => Ok(Mode::Reference),
            "fp16" => Ok(Mode::Fp16),
            other => match MinifloatFormat::from_name(other) {
                Ok(fmt) => Ok(Mode::Mx { fmt, block_size }),
                Err(Error::UnknownFormat { name, known }) => Err(Error::UnknownFormat {
                    name,
                    known: format!("reference, fp16 (control), {known}"),
                }),
                Err(e) => Err(e),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Mode::Reference => "reference".into(),
            Mode::Fp16 => "fp16".into(),
            Mode::Mx { fmt, .. } => fmt.name(),
        }
    }

    /// MX block size, or 0 for modes without blocks.
    pub fn block_size(&self) -> usize {
        match self {
            Mode::Mx { block_size, .. } => *block_size,
            _ => 0,
        }
    }

    pub fn is_mx(&self) -> bool {
        matches!(self, Mode::Mx { .. })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Mx { fmt, block_size } => write!(f, "mx-{fmt}/B{block_size}"),
            other => f.write_str(&other.name()),
        }
    }
}

/// Precomputed tables for one transform length and mode. Immutable and
/// shareable across threads.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    log2n: u32,
    mode: Mode,
    bitrev: Vec<usize>,
    /// `W_n^j = exp(-2 pi i j / n)` for `j < n/2`.
    twiddles: Vec<Complex64>,
    /// FP16-rounded twiddles (FP16 mode only).
    twiddles_fp16: Vec<Complex32>,
    /// Per stage, the MX-encoded twiddle groups for the forward direction.
    mx_forward: Vec<Vec<MxBlock>>,
    /// Conjugated copies for the inverse direction.
    mx_inverse: Vec<Vec<MxBlock>>,
}

impl FftPlan {
    pub fn new(n: usize, mode: Mode) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::UnsupportedSize(n));
        }
        if let Mode::Mx { block_size, .. } = mode {
            if block_size < 2 || block_size % 2 != 0 {
                return Err(Error::ConfigError {
                    field: "block",
                    message: format!("MX block size must be even and >= 2, got {block_size}"),
                });
            }
        }
        let log2n = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if log2n == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - log2n) })
            .collect();
        let twiddles: Vec<Complex64> = (0..n / 2)
            .map(|j| {
                let theta = -2.0 * PI * j as f64 / n as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();

        let mut plan = Self {
            n,
            log2n,
            mode,
            bitrev,
            twiddles,
            twiddles_fp16: Vec::new(),
            mx_forward: Vec::new(),
            mx_inverse: Vec::new(),
        };
        match mode {
            Mode::Reference => {}
            Mode::Fp16 => {
                let h = MinifloatFormat::FP16;
                plan.twiddles_fp16 = plan
                    .twiddles
                    .iter()
                    .map(|w| Complex32::new(h.round(w.re) as f32, h.round(w.im) as f32))
                    .collect();
            }
            Mode::Mx { fmt, block_size } => {
                let per_group = block_size / 2;
                for stage in 0..log2n {
                    let half = 1usize << stage;
                    let stride = n / (2 * half);
                    let stage_tw: Vec<Complex64> =
                        (0..n / 2).map(|b| plan.twiddles[(b % half) * stride]).collect();
                    let blocks = stage_tw
                        .chunks(per_group)
                        .map(|g| encode_complex_block_mx(g, fmt))
                        .collect::<Result<Vec<_>>>()?;
                    let conj = blocks.iter().map(MxBlock::conj).collect::<Result<Vec<_>>>()?;
                    plan.mx_forward.push(blocks);
                    plan.mx_inverse.push(conj);
                }
            }
        }
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn bitrev(&self) -> &[usize] {
        &self.bitrev
    }

    pub fn twiddles(&self) -> &[Complex64] {
        &self.twiddles
    }

    /// Prequantized twiddle blocks for `stage` (0-based), MX mode only.
    pub fn mx_twiddle_blocks(&self, stage: usize, direction: Direction) -> Option<&[MxBlock]> {
        let table = match direction {
            Direction::Forward => &self.mx_forward,
            Direction::Inverse => &self.mx_inverse,
        };
        table.get(stage).map(Vec::as_slice)
    }

    /// Unnormalized 1-D transform.
    pub fn fft_1d(&self, x: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
        let mut out = x.to_vec();
        self.fft_1d_in_place(&mut out, direction)?;
        Ok(out)
    }

    pub fn fft_1d_in_place(&self, x: &mut [Complex64], direction: Direction) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::ShapeError(format!("input length {} does not match plan length {}", x.len(), self.n)));
        }
        match self.mode {
            Mode::Reference => self.run_reference(x, direction),
            Mode::Fp16 => self.run_fp16(x, direction),
            Mode::Mx { fmt, block_size } => self.run_mx(x, direction, fmt, block_size / 2)?,
        }
        Ok(())
    }

    /// Unnormalized 2-D transform of a row-major `n x n` grid: every row, then
    /// every column, each through [`FftPlan::fft_1d`].
    pub fn fft_2d(&self, x: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
        let mut out = x.to_vec();
        self.fft_2d_in_place(&mut out, direction)?;
        Ok(out)
    }

    pub fn fft_2d_in_place(&self, x: &mut [Complex64], direction: Direction) -> Result<()> {
        let n = self.n;
        if x.len() != n * n {
            return Err(Error::UnsupportedSize(x.len()));
        }
        self.rows(x, direction)?;
        transpose(x, n);
        self.rows(x, direction)?;
        transpose(x, n);
        Ok(())
    }

    fn rows(&self, x: &mut [Complex64], direction: Direction) -> Result<()> {
        x.par_chunks_mut(self.n).try_for_each(|row| self.fft_1d_in_place(row, direction))
    }

    fn permute<T: Copy>(&self, x: &[Complex64], convert: impl Fn(Complex64) -> T) -> Vec<T> {
        self.bitrev.iter().map(|&j| convert(x[j])).collect()
    }

    /// `(u index, v index)` of butterfly `b` in stage with half-span `half`.
    #[inline]
    fn pair(b: usize, half: usize) -> (usize, usize) {
        let start = (b / half) * 2 * half;
        let j = b % half;
        (start + j, start + j + half)
    }

    fn run_reference(&self, x: &mut [Complex64], direction: Direction) {
        let mut a = self.permute(x, |z| z);
        for stage in 0..self.log2n {
            let half = 1usize << stage;
            let stride = self.n / (2 * half);
            for start in (0..self.n).step_by(2 * half) {
                for j in 0..half {
                    let mut w = self.twiddles[j * stride];
                    if direction == Direction::Inverse {
                        w = w.conj();
                    }
                    let u = a[start + j];
                    let wv = w * a[start + j + half];
                    a[start + j] = u + wv;
                    a[start + j + half] = u - wv;
                }
            }
        }
        x.copy_from_slice(&a);
    }

    fn run_fp16(&self, x: &mut [Complex64], direction: Direction) {
        let h = |v: f64| MinifloatFormat::FP16.round(v) as f32;
        let mut a: Vec<Complex32> = self.permute(x, |z| Complex32::new(h(z.re), h(z.im)));
        for stage in 0..self.log2n {
            let half = 1usize << stage;
            let stride = self.n / (2 * half);
            for start in (0..self.n).step_by(2 * half) {
                for j in 0..half {
                    let mut w = self.twiddles_fp16[j * stride];
                    if direction == Direction::Inverse {
                        w = w.conj();
                    }
                    let u = a[start + j];
                    let wv = fp16_complex_mul(w, a[start + j + half]);
                    a[start + j] = u + wv;
                    a[start + j + half] = u - wv;
                }
            }
        }
        for (dst, z) in x.iter_mut().zip(a) {
            *dst = Complex64::new(h(z.re as f64) as f64, h(z.im as f64) as f64);
        }
    }

    fn run_mx(&self, x: &mut [Complex64], direction: Direction, fmt: MinifloatFormat, per_group: usize) -> Result<()> {
        let mut a: Vec<Complex32> = self.permute(x, |z| Complex32::new(z.re as f32, z.im as f32));
        let mut v = vec![Complex32::default(); per_group];
        let mut wv = vec![Complex32::default(); per_group];
        let butterflies = self.n / 2;
        for stage in 0..self.log2n as usize {
            let half = 1usize << stage;
            let blocks = match direction {
                Direction::Forward => &self.mx_forward[stage],
                Direction::Inverse => &self.mx_inverse[stage],
            };
            for (g, w) in blocks.iter().enumerate() {
                let first = g * per_group;
                let count = per_group.min(butterflies - first);
                for i in 0..count {
                    v[i] = a[Self::pair(first + i, half).1];
                }
                mx_products(&v[..count], w, fmt, &mut wv[..count])?;
                for (i, &p) in wv[..count].iter().enumerate() {
                    let (iu, iv) = Self::pair(first + i, half);
                    let u = a[iu];
                    a[iu] = u + p;
                    a[iv] = u - p;
                }
            }
        }
        for (dst, z) in x.iter_mut().zip(a) {
            *dst = Complex64::new(z.re as f64, z.im as f64);
        }
        Ok(())
    }
}

/// Complex multiply with both operands rounded to FP16 and every product and
/// sum rounded to FP16.
#[inline]
fn fp16_complex_mul(w: Complex32, v: Complex32) -> Complex32 {
    let h = |x: f64| MinifloatFormat::FP16.round(x);
    let (wr, wi) = (w.re as f64, w.im as f64);
    let (vr, vi) = (h(v.re as f64), h(v.im as f64));
    let re = h(h(wr * vr) - h(wi * vi));
    let im = h(h(wr * vi) + h(wi * vr));
    Complex32::new(re as f32, im as f32)
}

/// Smallest `k >= 1` with `amax / 2^k <= limit`, for `amax > limit`.
fn renorm_shift(amax: f64, limit: f64) -> i32 {
    let mut k = (amax / limit).log2().ceil().max(1.0) as i32;
    while ldexp(amax, -k) > limit {
        k += 1;
    }
    while k > 1 && ldexp(amax, -(k - 1)) <= limit {
        k -= 1;
    }
    k
}

/// MX product `w * v` for one butterfly group, written to `out`.
///
/// Same arithmetic as [`butterfly_mx`] without the intermediate allocations:
/// encode `v`, multiply mantissas exactly, renormalize, requantize, decode.
fn mx_products(v: &[Complex32], w: &MxBlock, fmt: MinifloatFormat, out: &mut [Complex32]) -> Result<()> {
    let amax_v = v.iter().fold(0.0f64, |m, z| m.max((z.re as f64).abs()).max((z.im as f64).abs()));
    let sv = shared_scale_exp(amax_v, &fmt);
    let wc = w.codes();
    let mut amax_p = 0.0f64;
    let mut p = [(0.0f64, 0.0f64); 64];
    let mut p_heap;
    let p: &mut [(f64, f64)] = if v.len() <= p.len() {
        &mut p[..v.len()]
    } else {
        p_heap = vec![(0.0, 0.0); v.len()];
        &mut p_heap
    };
    for (i, z) in v.iter().enumerate() {
        let yr = fmt.round(ldexp(z.re as f64, -sv));
        let yi = fmt.round(ldexp(z.im as f64, -sv));
        let (xr, xi) = (wc[2 * i], wc[2 * i + 1]);
        let pr = xr * yr - xi * yi;
        let pi = xr * yi + xi * yr;
        amax_p = amax_p.max(pr.abs()).max(pi.abs());
        p[i] = (pr, pi);
    }
    let limit = fmt.max_finite();
    let mut s_out = w.scale_exp() + sv;
    let mut k = 0;
    if amax_p > limit {
        k = renorm_shift(amax_p, limit);
        s_out += k;
    }
    for (o, &(pr, pi)) in out.iter_mut().zip(p.iter()) {
        let (pr, pi) = (ldexp(pr, -k), ldexp(pi, -k));
        if pr.abs() > limit || pi.abs() > limit {
            return Err(Error::MantissaOverflow { value: pr.abs().max(pi.abs()), limit });
        }
        *o = Complex32::new(ldexp(fmt.round(pr), s_out) as f32, ldexp(fmt.round(pi), s_out) as f32);
    }
    Ok(())
}

/// MX-scaled complex butterfly.
///
/// `w` is a prequantized twiddle block holding `u.len()` complex values; its
/// element format is used for `v` and for the product. Returns
/// `(u + w v, u - w v)` with the sums formed in FP32.
pub fn butterfly_mx(u: &[Complex32], v: &[Complex32], w: &MxBlock) -> Result<(Vec<Complex32>, Vec<Complex32>)> {
    if u.len() != v.len() || 2 * u.len() != w.len() {
        return Err(Error::ShapeError(format!(
            "butterfly operands differ in length: u {}, v {}, w {}",
            u.len(),
            v.len(),
            w.len() / 2
        )));
    }
    let fmt = w.fmt();
    let v64: Vec<f64> = v.iter().flat_map(|z| [z.re as f64, z.im as f64]).collect();
    let v_block = encode_block_mx(&v64, fmt)?;
    let (xr, xi) = mantissas_block(w)?;
    let (yr, yi) = mantissas_block(&v_block)?;

    let mut p_re: Vec<f64> = (0..u.len()).map(|j| xr[j] * yr[j] - xi[j] * yi[j]).collect();
    let mut p_im: Vec<f64> = (0..u.len()).map(|j| xr[j] * yi[j] + xi[j] * yr[j]).collect();

    let mut s_out = w.scale_exp() + v_block.scale_exp();
    let amax = p_re.iter().chain(&p_im).fold(0.0f64, |m, p| m.max(p.abs()));
    let limit = fmt.max_finite();
    if amax > limit {
        let k = renorm_shift(amax, limit);
        for p in p_re.iter_mut().chain(p_im.iter_mut()) {
            *p = ldexp(*p, -k);
        }
        s_out += k;
    }
    let product = encode_from_mant_block(&p_re, &p_im, s_out, fmt)?;
    let wv = decode_block_mx(&product)?;

    let y0 = u.iter().zip(&wv).map(|(u, p)| u + to_c32(*p)).collect();
    let y1 = u.iter().zip(&wv).map(|(u, p)| u - to_c32(*p)).collect();
    Ok((y0, y1))
}

fn to_c32(z: Complex64) -> Complex32 {
    Complex32::new(z.re as f32, z.im as f32)
}

/// Operands of a group of butterflies, validated for equal length and
/// finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterflyOperands {
    pub u: Vec<Complex32>,
    pub v: Vec<Complex32>,
    pub w: Vec<Complex64>,
}

impl ButterflyOperands {
    pub fn new(u: Vec<Complex32>, v: Vec<Complex32>, w: Vec<Complex64>) -> Result<Self> {
        if u.len() != v.len() || u.len() != w.len() {
            return Err(Error::ShapeError(format!(
                "butterfly operands differ in length: u {}, v {}, w {}",
                u.len(),
                v.len(),
                w.len()
            )));
        }
        let finite32 = |z: &Complex32| z.re.is_finite() && z.im.is_finite();
        if !u.iter().all(finite32) || !v.iter().all(finite32) || !w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidValue("non-finite butterfly operand".into()));
        }
        Ok(Self { u, v, w })
    }

    /// Encode the twiddles as one MX block and run [`butterfly_mx`].
    pub fn run_mx(&self, fmt: MinifloatFormat) -> Result<(Vec<Complex32>, Vec<Complex32>)> {
        let w = encode_complex_block_mx(&self.w, fmt)?;
        butterfly_mx(&self.u, &self.v, &w)
    }

    /// Exact FP64 butterfly, for comparison.
    pub fn run_exact(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let up = |z: &Complex32| Complex::new(z.re as f64, z.im as f64);
        let wv: Vec<Complex64> = self.w.iter().zip(&self.v).map(|(w, v)| w * up(v)).collect();
        let y0 = self.u.iter().zip(&wv).map(|(u, p)| up(u) + p).collect();
        let y1 = self.u.iter().zip(&wv).map(|(u, p)| up(u) - p).collect();
        (y0, y1)
    }
}

fn transpose(x: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            x.swap(i * n + j, j * n + i);
        }
    }
}
