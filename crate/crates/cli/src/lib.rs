//! Experiment harness: runs forward / round-trip pipelines over a grid of
//! sizes, modes, block sizes and seeds, scores each run against the FP64
//! reference pipeline on the same input, and emits CSV.
//!
//! CSV layout (UTF-8, comma separated, `.` decimal point):
//!
//! ```text
//! # key=value metadata lines (prescale and SSIM settings, phantom parameters)
//! dataset_id,seed,size,mode,block,pipeline,psnr,ssim,nmse,prescale_k,runtime_ms,psnr_std,ssim_std,nmse_std
//! ```
//!
//! Detail rows leave the three `*_std` columns empty. Each cell is followed by
//! one aggregate row whose `seed` is `mean`; its metric columns hold means
//! and the `*_std` columns population standard deviations. Infinite PSNR is
//! written as `inf`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use mxfft::fftcore::{Direction, FftPlan, Mode};
use mxfft::metrics::{self, MetricsReport};
use mxfft::mri::{self, ComplexGrid, Domain, PhantomKind, PhantomParams};
use mxfft::prescale::PrescaleConfig;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec, field `{field}`: {message}")]
    Config { field: &'static str, message: String },

    #[error(transparent)]
    Core(#[from] mxfft::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed csv row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn config(field: &'static str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { field, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pipeline {
    Forward,
    Roundtrip,
}

impl Pipeline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::Forward => "forward",
            Pipeline::Roundtrip => "roundtrip",
        }
    }
}

impl FromStr for Pipeline {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forward" => Ok(Pipeline::Forward),
            "roundtrip" | "round-trip" => Ok(Pipeline::Roundtrip),
            other => Err(config("pipeline", format!("unknown pipeline {other:?} (forward, roundtrip)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Phantom { coils: usize, kind: PhantomKind, texture: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub input: InputSource,
    /// Mode names: `reference`, `fp16` or an MX element format.
    pub modes: Vec<String>,
    /// MX block sizes; ignored for non-MX modes.
    pub blocks: Vec<usize>,
    /// Image sizes; ignored for file input (the file fixes the size).
    pub sizes: Vec<usize>,
    pub pipelines: Vec<Pipeline>,
    pub prescale: PrescaleConfig,
    /// Phantom seeds; file input runs once with seed 0.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            input: InputSource::Phantom { coils: 4, kind: PhantomKind::Blobs, texture: mxfft::mri::DEFAULT_TEXTURE },
            modes: vec!["e4m3".into()],
            blocks: vec![32],
            sizes: vec![128],
            pipelines: vec![Pipeline::Forward],
            prescale: PrescaleConfig::default(),
            seeds: (0..10).collect(),
        }
    }
}

/// One configuration scored over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CellKey {
    size: usize,
    pipeline: Pipeline,
    mode_index: usize,
    mode: Mode,
}

impl ExperimentSpec {
    /// Parsed modes in the order given, MX modes expanded over block sizes.
    pub fn expanded_modes(&self) -> Result<Vec<Mode>> {
        let mut out = Vec::new();
        for name in &self.modes {
            let probe = Mode::parse(name, 2).map_err(|e| config("modes", e.to_string()))?;
            if probe.is_mx() {
                for &b in &self.blocks {
                    out.push(Mode::parse(name, b).map_err(|e| config("modes", e.to_string()))?);
                }
            } else {
                out.push(probe);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(config("modes", "at least one mode is required"));
        }
        if self.pipelines.is_empty() {
            return Err(config("pipeline", "at least one pipeline is required"));
        }
        let modes = self.expanded_modes()?;
        if modes.iter().any(Mode::is_mx) && self.blocks.is_empty() {
            return Err(config("blocks", "MX modes need at least one block size"));
        }
        if let Some(b) = self.blocks.iter().find(|&&b| b < 2 || b % 2 != 0) {
            return Err(config("blocks", format!("block size {b} must be even and >= 2")));
        }
        match &self.input {
            InputSource::Phantom { coils, texture, .. } => {
                if self.sizes.is_empty() {
                    return Err(config("sizes", "at least one size is required"));
                }
                if let Some(s) = self.sizes.iter().find(|&&s| s < 2 || !s.is_power_of_two()) {
                    return Err(config("sizes", format!("size {s} is not a power of two >= 2")));
                }
                if let Some(s) = self.sizes.iter().find(|&&s| s < metrics::SSIM_WINDOW) {
                    return Err(config("sizes", format!("size {s} is below the SSIM window")));
                }
                if *coils == 0 {
                    return Err(config("coils", "at least one coil is required"));
                }
                if !(*texture >= 0.0 && texture.is_finite()) {
                    return Err(config("texture", "must be finite and >= 0"));
                }
                if self.seeds.is_empty() {
                    return Err(config("seeds", "at least one seed is required"));
                }
            }
            InputSource::File(path) => {
                if path.as_os_str().is_empty() {
                    return Err(config("input", "empty path"));
                }
            }
        }
        self.prescale.validate().map_err(|e| match e {
            mxfft::Error::ConfigError { field, message } => config(field, message),
            other => config("prescale", other.to_string()),
        })
    }

    pub fn dataset_id(&self) -> String {
        match &self.input {
            InputSource::Phantom { coils, kind, .. } => format!("phantom-{kind}-c{coils}"),
            InputSource::File(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        }
    }

    /// `key=value` pairs describing everything that influences the numbers.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let p = &self.prescale;
        let mut meta = vec![
            ("prescale.target".to_string(), p.target.to_string()),
            ("prescale.tau".to_string(), p.tau.to_string()),
            ("prescale.tau_min".to_string(), p.tau_min.to_string()),
            ("prescale.k_min".to_string(), p.k_min.to_string()),
            ("prescale.k_max".to_string(), p.k_max.to_string()),
            ("ssim.window".to_string(), metrics::SSIM_WINDOW.to_string()),
            ("ssim.sigma".to_string(), metrics::SSIM_SIGMA.to_string()),
            ("ssim.k1".to_string(), metrics::SSIM_K1.to_string()),
            ("ssim.k2".to_string(), metrics::SSIM_K2.to_string()),
            ("ssim.range".to_string(), "max(ref)-min(ref)".to_string()),
            ("psnr.peak".to_string(), "max(ref)".to_string()),
            ("score_target".to_string(), "reference (fp64) pipeline on the same input".to_string()),
        ];
        match &self.input {
            InputSource::Phantom { coils, kind, texture } => {
                meta.push(("phantom.kind".into(), kind.to_string()));
                meta.push(("phantom.coils".into(), coils.to_string()));
                meta.push(("phantom.texture".into(), texture.to_string()));
            }
            InputSource::File(path) => meta.push(("input".into(), path.display().to_string())),
        }
        meta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedField {
    Seed(u64),
    Mean,
}

/// One CSV row: a single run, or a per-cell aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub dataset_id: String,
    pub seed: SeedField,
    pub size: usize,
    pub mode: String,
    pub block: usize,
    pub pipeline: Pipeline,
    pub psnr: f64,
    pub ssim: f64,
    pub nmse: f64,
    pub prescale_k: Option<i32>,
    pub runtime_ms: f64,
    /// `(psnr, ssim, nmse)` standard deviations on aggregate rows.
    pub std: Option<(f64, f64, f64)>,
}

impl Row {
    pub fn is_aggregate(&self) -> bool {
        self.seed == SeedField::Mean
    }
}

pub const HEADER: [&str; 14] = [
    "dataset_id",
    "seed",
    "size",
    "mode",
    "block",
    "pipeline",
    "psnr",
    "ssim",
    "nmse",
    "prescale_k",
    "runtime_ms",
    "psnr_std",
    "ssim_std",
    "nmse_std",
];

struct Input {
    seed: u64,
    image: ComplexGrid,
    kspace: ComplexGrid,
}

fn load_inputs(spec: &ExperimentSpec, size: usize) -> Result<Vec<Input>> {
    match &spec.input {
        InputSource::Phantom { coils, kind, texture } => spec
            .seeds
            .par_iter()
            .map(|&seed| {
                let params = PhantomParams { n: size, coils: *coils, seed, kind: *kind, texture: *texture };
                let (image, kspace) = mri::gen_phantom(&params)?;
                Ok(Input { seed, image, kspace })
            })
            .collect(),
        InputSource::File(path) => {
            let grid = mri::read_grid(path)?;
            let (image, kspace) = complete_domains(grid)?;
            Ok(vec![Input { seed: 0, image, kspace }])
        }
    }
}

/// Given one domain, derive the other with the FP64 reference transform so
/// both pipelines can run on a file input.
fn complete_domains(grid: ComplexGrid) -> Result<(ComplexGrid, ComplexGrid)> {
    let n = grid.n();
    let plan = FftPlan::new(n, Mode::Reference)?;
    let mut other = Vec::with_capacity(grid.data().len());
    let inv_n2 = 1.0 / (n * n) as f64;
    for coil in grid.coil_slices() {
        match grid.domain() {
            Domain::KSpace => other.extend(plan.fft_2d(coil, Direction::Forward)?),
            Domain::Image => other.extend(plan.fft_2d(coil, Direction::Inverse)?.into_iter().map(|z| z * inv_n2)),
        }
    }
    match grid.domain() {
        Domain::KSpace => {
            let image = ComplexGrid::new(Domain::Image, grid.coils(), n, other)?;
            Ok((image, grid))
        }
        Domain::Image => {
            let kspace = ComplexGrid::new(Domain::KSpace, grid.coils(), n, other)?;
            Ok((grid, kspace))
        }
    }
}

fn run_pipeline(pipeline: Pipeline, input: &Input, plan: &FftPlan, cfg: &PrescaleConfig) -> Result<mri::PipelineOutput> {
    Ok(match pipeline {
        Pipeline::Forward => mri::forward_pipeline(&input.kspace, plan, cfg)?,
        Pipeline::Roundtrip => mri::roundtrip_pipeline(&input.image, plan, cfg)?,
    })
}

/// Run every cell of the spec. Rows come back sorted by size, pipeline, mode
/// (in spec order, MX modes by block size) and seed, each cell followed by
/// its aggregate row.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let modes = spec.expanded_modes()?;
    let dataset_id = spec.dataset_id();
    let sizes: Vec<usize> = match &spec.input {
        InputSource::Phantom { .. } => spec.sizes.clone(),
        InputSource::File(path) => vec![mri::read_grid(path)?.n()],
    };

    let mut detail: Vec<(CellKey, Row)> = Vec::new();
    for &size in &sizes {
        let reference_plan = FftPlan::new(size, Mode::Reference)?;
        let plans: Vec<FftPlan> = modes.iter().map(|&m| FftPlan::new(size, m)).collect::<mxfft::Result<_>>()?;
        let inputs = load_inputs(spec, size)?;

        let mut jobs = Vec::new();
        for input in &inputs {
            for &pipeline in &spec.pipelines {
                jobs.push((input, pipeline));
            }
        }
        let rows: Vec<Vec<(CellKey, Row)>> = jobs
            .par_iter()
            .map(|&(input, pipeline)| {
                let reference = run_pipeline(pipeline, input, &reference_plan, &spec.prescale)?;
                modes
                    .par_iter()
                    .zip(plans.par_iter())
                    .enumerate()
                    .map(|(mode_index, (&mode, plan))| {
                        let start = Instant::now();
                        let out = run_pipeline(pipeline, input, plan, &spec.prescale)?;
                        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                        let m = MetricsReport::compute(&reference.rss, &out.rss)?;
                        let key = CellKey { size, pipeline, mode_index, mode };
                        let row = Row {
                            dataset_id: dataset_id.clone(),
                            seed: SeedField::Seed(input.seed),
                            size,
                            mode: mode.name(),
                            block: mode.block_size(),
                            pipeline,
                            psnr: m.psnr_db,
                            ssim: m.ssim,
                            nmse: m.nmse,
                            prescale_k: Some(out.prescale.k),
                            runtime_ms,
                            std: None,
                        };
                        Ok((key, row))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        detail.extend(rows.into_iter().flatten());
    }

    let order = |k: &CellKey| (k.size, k.pipeline, k.mode_index);
    let seed_of = |r: &Row| match r.seed {
        SeedField::Seed(s) => s,
        SeedField::Mean => u64::MAX,
    };
    detail.sort_by(|(ka, ra), (kb, rb)| order(ka).cmp(&order(kb)).then(seed_of(ra).cmp(&seed_of(rb))));

    let mut out = Vec::with_capacity(detail.len() + detail.len() / spec.seeds.len().max(1) + 1);
    let mut groups: Vec<(CellKey, Vec<Row>)> = Vec::new();
    for (key, row) in detail {
        match groups.last_mut() {
            Some((k, rows)) if order(k) == order(&key) => rows.push(row),
            _ => groups.push((key, vec![row])),
        }
    }
    for (_, rows) in groups {
        let agg = aggregate(&rows);
        out.extend(rows);
        out.push(agg);
    }
    Ok(out)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate(rows: &[Row]) -> Row {
    let col = |f: fn(&Row) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let (psnr, psnr_std) = mean_std(&col(|r| r.psnr));
    let (ssim, ssim_std) = mean_std(&col(|r| r.ssim));
    let (nmse, nmse_std) = mean_std(&col(|r| r.nmse));
    let (runtime_ms, _) = mean_std(&col(|r| r.runtime_ms));
    let first = &rows[0];
    Row {
        dataset_id: first.dataset_id.clone(),
        seed: SeedField::Mean,
        size: first.size,
        mode: first.mode.clone(),
        block: first.block,
        pipeline: first.pipeline,
        psnr,
        ssim,
        nmse,
        prescale_k: None,
        runtime_ms,
        std: Some((psnr_std, ssim_std, nmse_std)),
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        other => other.parse().map_err(|e| format!("{other:?}: {e}")),
    }
}

pub fn row_record(row: &Row) -> Vec<String> {
    let (ps, ss, ns) = match row.std {
        Some((a, b, c)) => (format_float(a), format_float(b), format_float(c)),
        None => (String::new(), String::new(), String::new()),
    };
    vec![
        row.dataset_id.clone(),
        match row.seed {
            SeedField::Seed(s) => s.to_string(),
            SeedField::Mean => "mean".into(),
        },
        row.size.to_string(),
        row.mode.clone(),
        row.block.to_string(),
        row.pipeline.as_str().into(),
        format_float(row.psnr),
        format_float(row.ssim),
        format_float(row.nmse),
        row.prescale_k.map(|k| k.to_string()).unwrap_or_default(),
        format!("{:.3}", row.runtime_ms),
        ps,
        ss,
        ns,
    ]
}

/// Write metadata comment lines, the header and all rows.
pub fn write_csv<W: Write>(spec: &ExperimentSpec, rows: &[Row], mut out: W) -> Result<()> {
    for (k, v) in spec.metadata() {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(row_record(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Parse CSV produced by [`write_csv`], skipping metadata lines.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<Row>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(HarnessError::Parse { row: 0, message: format!("unexpected header {headers:?}") });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let err = |message: String| HarnessError::Parse { row: i + 1, message };
        let num = |j: usize| parse_float(&rec[j]).map_err(err);
        let int = |j: usize| rec[j].parse::<usize>().map_err(|e| err(format!("{}: {e}", &rec[j])));
        let seed = match &rec[1] {
            "mean" => SeedField::Mean,
            s => SeedField::Seed(s.parse().map_err(|e| err(format!("seed {s:?}: {e}")))?),
        };
        let std = if rec[11].is_empty() { None } else { Some((num(11)?, num(12)?, num(13)?)) };
        rows.push(Row {
            dataset_id: rec[0].to_string(),
            seed,
            size: int(2)?,
            mode: rec[3].to_string(),
            block: int(4)?,
            pipeline: rec[5].parse()?,
            psnr: num(6)?,
            ssim: num(7)?,
            nmse: num(8)?,
            prescale_k: if rec[9].is_empty() {
                None
            } else {
                Some(rec[9].parse().map_err(|e| err(format!("prescale_k: {e}")))?)
            },
            runtime_ms: num(10)?,
            std,
        });
    }
    Ok(rows)
}

/// A metric from every aggregate row, keyed by `(mode, block, size, pipeline)`.
pub fn aggregates(rows: &[Row], metric: fn(&Row) -> f64) -> HashMap<(String, usize, usize, Pipeline), f64> {
    rows.iter()
        .filter(|r| r.is_aggregate())
        .map(|r| ((r.mode.clone(), r.block, r.size, r.pipeline), metric(r)))
        .collect()
}
