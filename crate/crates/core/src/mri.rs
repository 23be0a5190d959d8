//! Multi-coil MRI-style pipelines, synthetic phantoms and grid file I/O.
//!
//! Forward case: `T_c = F{X_c}` applied to k-space. Round-trip case:
//! `T_c = F^-1{F{x_c}} / N^2` applied to coil images. Either way the coil
//! results are combined by root-sum-square.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fftcore::{Direction, FftPlan, Mode};
use crate::prescale::{compute_prescale, scale_in_place, PrescaleConfig, PrescaleResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    KSpace,
    Image,
}

impl Domain {
    fn tag(self) -> u8 {
        match self {
            Domain::KSpace => 0,
            Domain::Image => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Domain::KSpace),
            1 => Ok(Domain::Image),
            other => Err(Error::BadDomain(other)),
        }
    }
}

/// `coils` stacked `n x n` complex grids, coil-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    domain: Domain,
    coils: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(domain: Domain, coils: usize, n: usize, data: Vec<Complex64>) -> Result<Self> {
        if coils == 0 || n == 0 {
            return Err(Error::ShapeError(format!("grid needs coils >= 1 and n >= 1, got {coils} x {n}")));
        }
        if data.len() != coils * n * n {
            return Err(Error::ShapeError(format!(
                "expected {coils} x {n} x {n} = {} samples, got {}",
                coils * n * n,
                data.len()
            )));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidValue("grid contains a non-finite sample".into()));
        }
        Ok(Self { domain, coils, n, data })
    }

    pub(crate) fn new_unchecked(domain: Domain, coils: usize, n: usize, data: Vec<Complex64>) -> Self {
        Self { domain, coils, n, data }
    }

    pub fn zeros(domain: Domain, coils: usize, n: usize) -> Self {
        Self::new_unchecked(domain, coils, n, vec![Complex64::default(); coils * n * n])
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn coil(&self, c: usize) -> &[Complex64] {
        let len = self.n * self.n;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn coil_slices(&self) -> Vec<&[Complex64]> {
        self.data.chunks(self.n * self.n).collect()
    }

    /// Root-sum-square over coils.
    pub fn rss(&self) -> RssImage {
        rss(&self.coil_slices(), self.n).expect("coil slices share the grid shape")
    }
}

/// Nonnegative `n x n` magnitude image.
#[derive(Debug, Clone, PartialEq)]
pub struct RssImage {
    n: usize,
    pixels: Vec<f64>,
}

impl RssImage {
    pub fn new(n: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != n * n {
            return Err(Error::ShapeError(format!("expected {} pixels, got {}", n * n, pixels.len())));
        }
        if pixels.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidValue("RSS pixels must be finite and nonnegative".into()));
        }
        Ok(Self { n, pixels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Pixelwise `sqrt(sum_c |T_c|^2)`, coils summed in ascending order.
pub fn rss(images: &[&[Complex64]], n: usize) -> Result<RssImage> {
    if images.is_empty() {
        return Err(Error::ShapeError("rss needs at least one coil".into()));
    }
    if let Some(bad) = images.iter().find(|c| c.len() != n * n) {
        return Err(Error::ShapeError(format!("coil has {} samples, expected {}", bad.len(), n * n)));
    }
    let pixels = (0..n * n)
        .map(|p| images.iter().map(|c| c[p].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    Ok(RssImage { n, pixels })
}

/// RSS image plus the prescale that was applied on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub rss: RssImage,
    pub prescale: PrescaleResult,
    /// Per-coil transform output in the caller's original scale.
    pub coils: ComplexGrid,
}

fn check_input(x: &ComplexGrid, plan: &FftPlan, expected: Domain) -> Result<()> {
    if x.domain() != expected {
        return Err(Error::InvalidValue(format!("pipeline expects {expected:?} data, got {:?}", x.domain())));
    }
    if plan.len() != x.n() {
        return Err(Error::ShapeError(format!("plan length {} does not match grid side {}", plan.len(), x.n())));
    }
    Ok(())
}

fn per_coil(data: &mut [Complex64], n: usize, f: impl Fn(&mut [Complex64]) -> Result<()> + Sync + Send) -> Result<()> {
    data.par_chunks_mut(n * n).try_for_each(f)
}

/// Global prescale, per-coil forward 2-D transform, exact prescale undo, RSS.
pub fn forward_pipeline(kspace: &ComplexGrid, plan: &FftPlan, cfg: &PrescaleConfig) -> Result<PipelineOutput> {
    check_input(kspace, plan, Domain::KSpace)?;
    let pre = compute_prescale(kspace, cfg)?;
    let mut work = kspace.clone();
    scale_in_place(work.data_mut(), pre.k);
    per_coil(work.data_mut(), kspace.n(), |c| plan.fft_2d_in_place(c, Direction::Forward))?;
    scale_in_place(work.data_mut(), -pre.k);
    work.domain = Domain::Image;
    Ok(PipelineOutput { rss: work.rss(), prescale: pre, coils: work })
}

/// Global prescale, per-coil forward then inverse 2-D transform, `1/N^2` and
/// prescale undo in FP64, RSS.
pub fn roundtrip_pipeline(image: &ComplexGrid, plan: &FftPlan, cfg: &PrescaleConfig) -> Result<PipelineOutput> {
    check_input(image, plan, Domain::Image)?;
    let pre = compute_prescale(image, cfg)?;
    let n = image.n();
    let mut work = image.clone();
    scale_in_place(work.data_mut(), pre.k);
    per_coil(work.data_mut(), n, |c| {
        plan.fft_2d_in_place(c, Direction::Forward)?;
        plan.fft_2d_in_place(c, Direction::Inverse)
    })?;
    scale_in_place(work.data_mut(), -2 * n.trailing_zeros() as i32);
    scale_in_place(work.data_mut(), -pre.k);
    Ok(PipelineOutput { rss: work.rss(), prescale: pre, coils: work })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhantomKind {
    Blobs,
    Bars,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blobs" => Ok(PhantomKind::Blobs),
            "bars" => Ok(PhantomKind::Bars),
            _ => Err(Error::ConfigError { field: "kind", message: format!("unknown phantom kind {s:?} (blobs, bars)") }),
        }
    }
}

impl std::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhantomKind::Blobs => "blobs",
            PhantomKind::Bars => "bars",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomParams {
    pub n: usize,
    pub coils: usize,
    pub seed: u64,
    pub kind: PhantomKind,
    /// Amplitude of low-level random texture added over the whole field of
    /// view, relative to a unit-peak object. Larger values give heavier
    /// low-magnitude tails.
    pub texture: f64,
}

/// Default texture amplitude.
pub const DEFAULT_TEXTURE: f64 = 0.05;

impl PhantomParams {
    pub fn new(n: usize, coils: usize, seed: u64, kind: PhantomKind) -> Self {
        Self { n, coils, seed, kind, texture: DEFAULT_TEXTURE }
    }
}

/// Lowest coil sensitivity magnitude; keeps the RSS of the maps >= this.
const SENSITIVITY_FLOOR: f64 = 0.5;

/// Deterministic synthetic multi-coil phantom.
///
/// Returns `(image, kspace)` where `kspace_c = F^-1{image_c} / N^2`, so the
/// forward pipeline (`F` applied to k-space) reproduces the coil images.
/// Object shape, coil maps and texture draw from separate seeded streams.
pub fn gen_phantom(params: &PhantomParams) -> Result<(ComplexGrid, ComplexGrid)> {
    let PhantomParams { n, coils, seed, kind, texture } = *params;
    if !(texture >= 0.0 && texture.is_finite()) {
        return Err(Error::ConfigError { field: "texture", message: format!("must be >= 0, got {texture}") });
    }
    let sens = coil_sensitivities(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut magnitude = object_magnitude(n, kind, &mut rng);
    let (pa, pb, pc) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-3.1..3.1));
    if texture > 0.0 {
        let mut tex = ChaCha8Rng::seed_from_u64(seed);
        tex.set_stream(2);
        for v in &mut magnitude {
            *v += texture * tex.gen::<f64>();
        }
    }

    let mut image = Vec::with_capacity(coils * n * n);
    for c in 0..coils {
        for row in 0..n {
            for col in 0..n {
                let (x, y) = coords(n, row, col);
                let p = row * n + col;
                let object = Complex64::from_polar(magnitude[p], pa * x + pb * y + pc);
                image.push(object * sens[c * n * n + p]);
            }
        }
    }
    let image = ComplexGrid::new(Domain::Image, coils, n, image)?;

    let plan = FftPlan::new(n, Mode::Reference)?;
    let mut kspace = image.clone();
    kspace.domain = Domain::KSpace;
    per_coil(kspace.data_mut(), n, |c| plan.fft_2d_in_place(c, Direction::Inverse))?;
    scale_in_place(kspace.data_mut(), -2 * n.trailing_zeros() as i32);
    Ok((image, kspace))
}

/// Smooth complex coil sensitivity maps, `coils x n x n`. Each magnitude is
/// at least 0.5 everywhere.
pub fn coil_sensitivities(params: &PhantomParams) -> Result<Vec<Complex64>> {
    let PhantomParams { n, coils, seed, .. } = *params;
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::UnsupportedSize(n));
    }
    if coils == 0 {
        return Err(Error::ConfigError { field: "coils", message: "need at least one coil".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut maps = Vec::with_capacity(coils * n * n);
    for c in 0..coils {
        let angle = std::f64::consts::TAU * c as f64 / coils as f64 + rng.gen_range(-0.2..0.2);
        let width: f64 = rng.gen_range(0.5..0.8);
        let (ga, gb, g0) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-3.1..3.1));
        let (px, py) = if coils == 1 { (0.0, 0.0) } else { (1.2 * angle.cos(), 1.2 * angle.sin()) };
        for row in 0..n {
            for col in 0..n {
                let (x, y) = coords(n, row, col);
                let d2 = (x - px).powi(2) + (y - py).powi(2);
                let magnitude = SENSITIVITY_FLOOR + (-d2 / (2.0 * width * width)).exp();
                maps.push(Complex64::from_polar(magnitude, ga * x + gb * y + g0));
            }
        }
    }
    Ok(maps)
}

/// Whether pixel `(row, col)` of an `n x n` phantom lies inside the object
/// support.
pub fn phantom_support(n: usize, row: usize, col: usize) -> bool {
    let (x, y) = coords(n, row, col);
    in_support(x, y)
}

/// Pixel centre in `[-1, 1)` coordinates.
fn coords(n: usize, row: usize, col: usize) -> (f64, f64) {
    let step = 2.0 / n as f64;
    (-1.0 + (col as f64 + 0.5) * step, -1.0 + (row as f64 + 0.5) * step)
}

fn in_support(x: f64, y: f64) -> bool {
    (x / 0.85).powi(2) + (y / 0.95).powi(2) <= 1.0
}

fn object_magnitude(n: usize, kind: PhantomKind, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    match kind {
        PhantomKind::Blobs => {
            let count = rng.gen_range(6..=12);
            let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
                .map(|_| {
                    let r = rng.gen_range(0.0..0.65);
                    let t = rng.gen_range(0.0..std::f64::consts::TAU);
                    (r * t.cos(), r * t.sin(), rng.gen_range(0.03..0.2), rng.gen_range(0.2..1.0))
                })
                .collect();
            for row in 0..n {
                for col in 0..n {
                    let (x, y) = coords(n, row, col);
                    if !in_support(x, y) {
                        continue;
                    }
                    let mut v = 0.2;
                    for &(cx, cy, s, a) in &blobs {
                        v += a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp();
                    }
                    m[row * n + col] = v;
                }
            }
        }
        PhantomKind::Bars => {
            let count = rng.gen_range(4..=8);
            let bars: Vec<(bool, f64, f64, f64)> = (0..count)
                .map(|_| (rng.gen_bool(0.5), rng.gen_range(-0.6..0.6), rng.gen_range(0.02..0.1), rng.gen_range(0.3..1.0)))
                .collect();
            for row in 0..n {
                for col in 0..n {
                    let (x, y) = coords(n, row, col);
                    if !in_support(x, y) {
                        continue;
                    }
                    let mut v = 0.2;
                    for &(vertical, pos, width, a) in &bars {
                        let d = if vertical { x - pos } else { y - pos };
                        if d.abs() <= width / 2.0 {
                            v += a;
                        }
                    }
                    m[row * n + col] = v;
                }
            }
        }
    }
    let peak = m.iter().copied().fold(0.0, f64::max);
    for v in &mut m {
        *v /= peak;
    }
    m
}

const MAGIC: &[u8; 4] = b"MXCG";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4;

/// Serialize to the little-endian MXCG layout.
pub fn encode_grid(grid: &ComplexGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * grid.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(grid.domain.tag());
    out.extend_from_slice(&(grid.coils as u32).to_le_bytes());
    out.extend_from_slice(&(grid.n as u32).to_le_bytes());
    for z in &grid.data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<ComplexGrid> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile);
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let domain = Domain::from_tag(bytes[8])?;
    let coils = u32_at(9) as usize;
    let n = u32_at(13) as usize;
    let count = coils
        .checked_mul(n)
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| Error::ShapeError(format!("grid dimensions {coils} x {n} x {n} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    let needed = count.checked_mul(16).ok_or(Error::TruncatedFile)?;
    if payload.len() < needed {
        return Err(Error::TruncatedFile);
    }
    if payload.len() > needed {
        return Err(Error::TrailingData(payload.len() - needed));
    }
    let f64_at = |at: usize| f64::from_le_bytes(payload[at..at + 8].try_into().unwrap());
    let data: Vec<Complex64> = (0..count).map(|i| Complex64::new(f64_at(16 * i), f64_at(16 * i + 8))).collect();
    if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinitePayload);
    }
    ComplexGrid::new(domain, coils, n, data)
}

pub fn write_grid(grid: &ComplexGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_grid(grid))?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<ComplexGrid> {
    decode_grid(&fs::read(path)?)
}
