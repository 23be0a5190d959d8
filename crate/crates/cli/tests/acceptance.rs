//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use mxfft::minifloat::{MinifloatFormat, REGISTRY};
use mxfft::mri::{ComplexGrid, Domain};
use mxfft::mxblock::encode_block_mx;
use mxfft::prescale::{apply_prescale, compute_prescale_values, undo_prescale};
use mxfft::{Direction, FftPlan, Mode, PrescaleConfig};
use mxfft_cli::{aggregates, run_experiment, ExperimentSpec, Pipeline, Row};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const MX_FORMATS: [&str; 4] = ["e4m3", "e5m2", "e2m3", "e3m2"];
const BLOCKS: [usize; 3] = [2, 8, 32];

fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| v * Complex64::from_polar(1.0, -std::f64::consts::TAU * ((j * k) % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn reference_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_1d = 0.0f64;
    for n in [2usize, 8, 64, 256, 1024] {
        let plan = FftPlan::new(n, Mode::Reference).map_err(|e| e.to_string())?;
        let x = random_complex(&mut rng, n);
        let err = rel_l2(&plan.fft_1d(&x, Direction::Forward).map_err(|e| e.to_string())?, &dft(&x));
        worst_1d = worst_1d.max(err);
        if err > 1e-10 {
            return Err(format!("n={n}: relative error {err:.3e} > 1e-10"));
        }
    }
    let mut worst_2d = 0.0f64;
    for n in [64usize, 256] {
        let plan = FftPlan::new(n, Mode::Reference).map_err(|e| e.to_string())?;
        let x = random_complex(&mut rng, n * n);
        let fwd = plan.fft_2d(&x, Direction::Forward).map_err(|e| e.to_string())?;
        let back: Vec<Complex64> =
            plan.fft_2d(&fwd, Direction::Inverse).map_err(|e| e.to_string())?.iter().map(|z| z / (n * n) as f64).collect();
        let err = rel_l2(&back, &x);
        worst_2d = worst_2d.max(err);
        if err > 1e-9 {
            return Err(format!("2-D n={n}: round-trip error {err:.3e} > 1e-9"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 5.0 {
        return Err(format!("took {secs:.2} s (limit 5 s)"));
    }
    Ok(format!("max 1-D error {worst_1d:.2e}, max 2-D round-trip error {worst_2d:.2e}, {secs:.2} s"))
}

/// Exhaustive nearest value with ties to the even entry of the ascending
/// non-negative list.
fn nearest(grid: &[f64], v: f64) -> f64 {
    let a = v.abs();
    let max = *grid.last().unwrap();
    if a >= max {
        return max.copysign(v);
    }
    let hi = grid.partition_point(|&g| g < a);
    if grid[hi] == a {
        return v;
    }
    let lo = hi - 1;
    let (dl, dh) = (a - grid[lo], grid[hi] - a);
    let pick = if dl < dh || (dl == dh && lo % 2 == 0) { lo } else { hi };
    grid[pick].copysign(v)
}

fn codec_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ties = 0usize;
    for name in REGISTRY {
        let fmt = MinifloatFormat::from_name(name).map_err(|e| e.to_string())?;
        let grid: Vec<f64> = fmt.enumerate_values().into_iter().filter(|&v| v >= 0.0).collect();
        let (lo, hi) = (fmt.min_subnormal().log2() - 2.0, fmt.max_finite().log2() + 1.0);
        for i in 0..100_000 {
            // Every tenth input is an exact midpoint so ties are exercised.
            let mag = if i % 10 == 0 {
                let j = rng.gen_range(0..grid.len() - 1);
                ties += 1;
                0.5 * (grid[j] + grid[j + 1])
            } else {
                rng.gen_range(lo..hi).exp2()
            };
            let v = if rng.gen::<bool>() { mag } else { -mag };
            let got = fmt.quantize(v).map_err(|e| e.to_string())?;
            let want = nearest(&grid, v);
            if got != want {
                return Err(format!("{name}: quantize({v:e}) = {got:e}, nearest is {want:e}"));
            }
        }
    }
    Ok(format!("5 formats x 1e5 inputs ({ties} exact ties), 0 mismatches"))
}

fn mx_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for name in REGISTRY {
        let fmt = MinifloatFormat::from_name(name).map_err(|e| e.to_string())?;
        let m = fmt.mantissa_bits() as i32;
        for b in BLOCKS {
            for _ in 0..10_000 {
                let spread: f64 = rng.gen_range(0.0..6.0);
                let centre: f64 = rng.gen_range(-20.0..20.0);
                let x: Vec<f64> = (0..b)
                    .map(|_| {
                        let v = (centre + rng.gen_range(-spread..=spread)).exp2();
                        if rng.gen::<bool>() { v } else { -v }
                    })
                    .collect();
                let block = encode_block_mx(&x, fmt).map_err(|e| e.to_string())?;
                let s = block.scale();
                let amax = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let bound = amax / 2f64.powi(fmt.emax()) * 2f64.powi(fmt.emax() - m) / 2.0;
                for (xi, di) in x.iter().zip(block.decode_real()) {
                    let r = (xi / s).abs();
                    if r < fmt.min_normal() || r > fmt.max_finite() {
                        skipped += 1;
                        continue;
                    }
                    checked += 1;
                    if (xi - di).abs() > bound {
                        return Err(format!("{name} B={b}: |{xi:e} - {di:e}| exceeds {bound:e}"));
                    }
                }
            }
        }
    }
    Ok(format!("{checked} normal-range elements within bound, {skipped} outside the normal range, 0 violations"))
}

struct Sweep {
    psnr: HashMap<(String, usize, usize, Pipeline), f64>,
    ssim: HashMap<(String, usize, usize, Pipeline), f64>,
    nmse: HashMap<(String, usize, usize, Pipeline), f64>,
}

impl Sweep {
    fn new(rows: &[Row]) -> Self {
        Self { psnr: aggregates(rows, |r| r.psnr), ssim: aggregates(rows, |r| r.ssim), nmse: aggregates(rows, |r| r.nmse) }
    }
}

fn key(mode: &str, block: usize, size: usize, pipeline: Pipeline) -> (String, usize, usize, Pipeline) {
    (mode.to_string(), block, size, pipeline)
}

fn main_spec() -> ExperimentSpec {
    ExperimentSpec {
        modes: MX_FORMATS.iter().map(|s| s.to_string()).chain(["fp16".to_string()]).collect(),
        blocks: BLOCKS.to_vec(),
        sizes: vec![128],
        pipelines: vec![Pipeline::Forward, Pipeline::Roundtrip],
        seeds: (0..10).collect(),
        ..ExperimentSpec::default()
    }
}

fn mantissa_dominance(s: &Sweep) -> Outcome {
    let p = |m| s.psnr[&key(m, 32, 128, Pipeline::Forward)];
    let (e4m3, e5m2, e2m3, e3m2) = (p("e4m3"), p("e5m2"), p("e2m3"), p("e3m2"));
    let detail = format!("PSNR e4m3 {e4m3:.2} vs e5m2 {e5m2:.2}, e2m3 {e2m3:.2} vs e3m2 {e3m2:.2} dB");
    if e4m3 > e5m2 && e2m3 > e3m2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fp16_upper_bound(s: &Sweep) -> Outcome {
    let mut worst_margin = f64::INFINITY;
    for pipeline in [Pipeline::Forward, Pipeline::Roundtrip] {
        let fp16 = s.ssim[&key("fp16", 0, 128, pipeline)];
        for m in MX_FORMATS {
            for b in BLOCKS {
                let mx = s.ssim[&key(m, b, 128, pipeline)];
                if fp16 < mx {
                    return Err(format!("{} {m} B={b}: SSIM {mx:.5} > fp16 {fp16:.5}", pipeline.as_str()));
                }
                worst_margin = worst_margin.min(fp16 - mx);
            }
        }
    }
    Ok(format!("fp16 SSIM exceeds every MX mode, smallest margin {worst_margin:.4}"))
}

fn round_trip_degradation(s: &Sweep) -> Outcome {
    let mut min_ratio = f64::INFINITY;
    for m in MX_FORMATS {
        for b in BLOCKS {
            let fwd = s.nmse[&key(m, b, 128, Pipeline::Forward)];
            let rt = s.nmse[&key(m, b, 128, Pipeline::Roundtrip)];
            if rt < fwd {
                return Err(format!("{m} B={b}: round-trip NMSE {rt:.3e} < forward {fwd:.3e}"));
            }
            min_ratio = min_ratio.min(rt / fwd);
        }
    }
    Ok(format!("round-trip NMSE >= forward for all 12 MX modes, smallest ratio {min_ratio:.2}"))
}

fn block_size_trend(s: &Sweep) -> Outcome {
    let p = |b| s.psnr[&key("e4m3", b, 128, Pipeline::Forward)];
    let (b2, b8, b32) = (p(2), p(8), p(32));
    let detail = format!("e4m3 PSNR B=2 {b2:.2}, B=8 {b8:.2}, B=32 {b32:.2} dB");
    let middle = (b2 <= b8 && b8 <= b32) || (b8 - b32).abs() <= 1.0;
    if b32 > b2 && middle {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn size_dependence() -> Outcome {
    let spec = ExperimentSpec { sizes: vec![128, 256], ..ExperimentSpec::default() };
    let rows = run_experiment(&spec).map_err(|e| e.to_string())?;
    let ssim = aggregates(&rows, |r| r.ssim);
    let a = ssim[&key("e4m3", 32, 128, Pipeline::Forward)];
    let b = ssim[&key("e4m3", 32, 256, Pipeline::Forward)];
    let detail = format!("e4m3 SSIM 128: {a:.4}, 256: {b:.4}, |diff| {:.4} (limit 0.02)", (a - b).abs());
    if (a - b).abs() <= 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn prescale_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let data: Vec<Complex64> =
            (0..64).map(|_| Complex64::new(rng.gen_range(-1e4..1e4), rng.gen_range(-1e-4..1e-4))).collect();
        let grid = ComplexGrid::new(Domain::KSpace, 1, 8, data).map_err(|e| e.to_string())?;
        for k in -64..=64 {
            if undo_prescale(&apply_prescale(&grid, k), k) != grid {
                return Err(format!("undo(apply(x, {k}), {k}) differs from x"));
            }
        }
    }
    let cfg = PrescaleConfig::default();
    let real = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let mut tail = vec![1.0; 98];
    tail.extend([2f64.powi(-30); 2]);
    // (input, k1, k2, k) evaluated by hand with target 1, tau 1, floor 2^-20, bounds +-40.
    let cases: [(&str, Vec<Complex64>, i32, i32, i32); 3] = [
        ("peak-limited", real(&[40.0; 16]), -5, -25, -5),
        ("tail-limited", real(&tail), 0, 10, 10),
        ("clipped", real(&[2f64.powi(-60); 4]), 60, 40, 40),
    ];
    for (name, x, k1, k2, k) in cases {
        let r = compute_prescale_values(&x, &cfg).map_err(|e| e.to_string())?;
        if (r.k1, r.k2, r.k) != (k1, k2, k) {
            return Err(format!("{name}: got (k1, k2, k) = ({}, {}, {}), expected ({k1}, {k2}, {k})", r.k1, r.k2, r.k));
        }
    }
    Ok("bit-exact undo for |k| <= 64; peak-limited k=-5, tail-limited k=10, clipped k=40".into())
}

fn strip_runtime(rows: &[Row]) -> Vec<Row> {
    rows.iter().cloned().map(|r| Row { runtime_ms: 0.0, ..r }).collect()
}

fn csv_without_runtime(spec: &ExperimentSpec, rows: &[Row]) -> Result<String, String> {
    let mut buf = Vec::new();
    mxfft_cli::write_csv(spec, &strip_runtime(rows), &mut buf).map_err(|e| e.to_string())?;
    String::from_utf8(buf).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "reference correctness", reference_correctness()),
        (2, "codec oracle equivalence", codec_oracle()),
        (3, "MX round-trip bound", mx_round_trip()),
    ];

    let spec = main_spec();
    match run_experiment(&spec) {
        Ok(rows) => {
            let sweep = Sweep::new(&rows);
            results.push((4, "mantissa dominance", mantissa_dominance(&sweep)));
            results.push((5, "FP16 upper bound", fp16_upper_bound(&sweep)));
            results.push((6, "round-trip degradation", round_trip_degradation(&sweep)));
            results.push((7, "block-size trend", block_size_trend(&sweep)));
            results.push((8, "image-size weak dependence", size_dependence()));
            results.push((9, "prescale exactness", prescale_exactness()));
            let determinism = run_experiment(&spec).map_err(|e| e.to_string()).and_then(|again| {
                let (a, b) = (csv_without_runtime(&spec, &rows)?, csv_without_runtime(&spec, &again)?);
                if a == b {
                    Ok(format!("{} rows identical across two runs (runtime column excluded)", rows.len()))
                } else {
                    Err("second sweep produced a different CSV".into())
                }
            });
            results.push((10, "determinism", determinism));
        }
        Err(e) => {
            for (i, name) in [
                (4, "mantissa dominance"),
                (5, "FP16 upper bound"),
                (6, "round-trip degradation"),
                (7, "block-size trend"),
                (10, "determinism"),
            ] {
                results.push((i, name, Err(format!("sweep failed: {e}"))));
            }
            results.push((8, "image-size weak dependence", size_dependence()));
            results.push((9, "prescale exactness", prescale_exactness()));
            results.sort_by_key(|r| r.0);
        }
    }

    let mut failed = 0;
    for (i, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {i:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {i:>2} {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed in {:.1} s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
