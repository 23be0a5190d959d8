use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mxfft::mri::{self, PhantomKind, PhantomParams};
use mxfft::prescale::PrescaleConfig;
use mxfft_cli::{run_experiment, write_csv, ExperimentSpec, InputSource, Pipeline};

/// Mixed-precision MX FFT experiments on synthetic or file-based multi-coil data
#[derive(Parser, Debug)]
#[command(name = "mxfft", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic phantom as <out>.image.mxcg and <out>.kspace.mxcg
    GenPhantom {
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[command(flatten)]
        phantom: PhantomArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path prefix
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward pipeline (F applied to k-space) for one mode
    Forward(CellArgs),
    /// Round-trip pipeline (F^-1 F / N^2 applied to coil images) for one mode
    Roundtrip(CellArgs),
    /// Cross product of modes, block sizes, sizes, pipelines and seeds
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// Number of receive coils
    #[arg(long, default_value_t = 4)]
    coils: usize,
    /// Phantom kind: blobs or bars
    #[arg(long, default_value = "blobs")]
    kind: PhantomKind,
    /// Low-magnitude texture amplitude (heavier tails when larger)
    #[arg(long, default_value_t = mxfft::mri::DEFAULT_TEXTURE)]
    texture: f64,
}

#[derive(Args, Debug)]
struct PrescaleArgs {
    /// Target peak magnitude after prescale
    #[arg(long, default_value_t = 1.0)]
    target: f64,
    /// Tail percentile of nonzero magnitudes, in (0, 100)
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Floor for the tail percentile after prescale
    #[arg(long, default_value_t = 2f64.powi(-20))]
    tau_min: f64,
    #[arg(long, default_value_t = -40, allow_hyphen_values = true)]
    k_min: i32,
    #[arg(long, default_value_t = 40, allow_hyphen_values = true)]
    k_max: i32,
}

impl PrescaleArgs {
    fn config(&self) -> PrescaleConfig {
        PrescaleConfig { target: self.target, tau: self.tau, tau_min: self.tau_min, k_min: self.k_min, k_max: self.k_max }
    }
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Read an MXCG file instead of generating phantoms
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of phantom seeds (0..N, offset by --seed-base)
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    phantom: PhantomArgs,
    #[command(flatten)]
    prescale: PrescaleArgs,
}

#[derive(Args, Debug)]
struct CellArgs {
    /// reference, fp16, or an MX element format (e4m3, e5m2, e2m3, e3m2)
    #[arg(long, default_value = "e4m3")]
    mode: String,
    /// MX block size in real scalars
    #[arg(long, default_value_t = 32)]
    block: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "e4m3,e5m2,e2m3,e3m2,fp16")]
    mode: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "32")]
    block: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "128")]
    size: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "forward")]
    pipeline: Vec<Pipeline>,
    #[command(flatten)]
    common: CommonArgs,
}

fn input_source(common: &CommonArgs) -> InputSource {
    match &common.input {
        Some(path) => InputSource::File(path.clone()),
        None => InputSource::Phantom {
            coils: common.phantom.coils,
            kind: common.phantom.kind,
            texture: common.phantom.texture,
        },
    }
}

fn spec_from(common: &CommonArgs, modes: Vec<String>, blocks: Vec<usize>, sizes: Vec<usize>, pipelines: Vec<Pipeline>) -> ExperimentSpec {
    ExperimentSpec {
        input: input_source(common),
        modes,
        blocks,
        sizes,
        pipelines,
        prescale: common.prescale.config(),
        seeds: (common.seed_base..common.seed_base + common.seeds).collect(),
    }
}

fn run_and_write(spec: &ExperimentSpec, out: &Option<PathBuf>) -> Result<()> {
    let rows = run_experiment(spec)?;
    match out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(spec, &rows, BufWriter::new(f))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_csv(spec, &rows, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenPhantom { size, phantom, seed, out } => {
            let params = PhantomParams { n: size, coils: phantom.coils, seed, kind: phantom.kind, texture: phantom.texture };
            let (image, kspace) = mri::gen_phantom(&params)?;
            let with_suffix = |suffix: &str| {
                let mut p = out.clone().into_os_string();
                p.push(suffix);
                PathBuf::from(p)
            };
            let image_path = with_suffix(".image.mxcg");
            let kspace_path = with_suffix(".kspace.mxcg");
            mri::write_grid(&image, &image_path).with_context(|| format!("writing {}", image_path.display()))?;
            mri::write_grid(&kspace, &kspace_path).with_context(|| format!("writing {}", kspace_path.display()))?;
            eprintln!("wrote {} and {}", image_path.display(), kspace_path.display());
        }
        Command::Forward(args) => {
            let spec = spec_from(&args.common, vec![args.mode], vec![args.block], vec![args.size], vec![Pipeline::Forward]);
            run_and_write(&spec, &args.common.out)?;
        }
        Command::Roundtrip(args) => {
            let spec = spec_from(&args.common, vec![args.mode], vec![args.block], vec![args.size], vec![Pipeline::Roundtrip]);
            run_and_write(&spec, &args.common.out)?;
        }
        Command::Sweep(args) => {
            let spec = spec_from(&args.common, args.mode, args.block, args.size, args.pipeline);
            run_and_write(&spec, &args.common.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
