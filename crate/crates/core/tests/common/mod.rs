//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(n^2) DFT with `sign = -1` for forward, `+1` for inverse (unnormalized).
pub fn dft(x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let idx = (j * k) % n;
                    let theta = sign * std::f64::consts::TAU * idx as f64 / n as f64;
                    v * Complex64::from_polar(1.0, theta)
                })
                .sum()
        })
        .collect()
}

/// 2-D DFT applied row-wise then column-wise with the 1-D oracle.
pub fn dft_2d(x: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
    let mut rows: Vec<Complex64> = x.chunks(n).flat_map(|r| dft(r, sign)).collect();
    for c in 0..n {
        let col: Vec<Complex64> = (0..n).map(|r| rows[r * n + c]).collect();
        for (r, v) in dft(&col, sign).into_iter().enumerate() {
            rows[r * n + c] = v;
        }
    }
    rows
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_l2(test: &[Complex64], reference: &[Complex64]) -> f64 {
    let diff: f64 = test.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum();
    diff.sqrt() / norm(reference)
}

pub fn random_complex(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

/// Nearest non-negative representable value by exhaustive search; ties go to
/// the even index of the ascending list, which is the even code.
pub fn nearest_oracle(grid: &[f64], v: f64) -> f64 {
    let a = v.abs();
    let max = *grid.last().unwrap();
    if a >= max {
        return max.copysign(v);
    }
    let hi = grid.partition_point(|&g| g < a);
    if grid[hi] == a {
        return a.copysign(v);
    }
    let lo = hi - 1;
    let (dl, dh) = (a - grid[lo], grid[hi] - a);
    let pick = if dl < dh {
        lo
    } else if dh < dl {
        hi
    } else if lo % 2 == 0 {
        lo
    } else {
        hi
    };
    grid[pick].copysign(v)
}
