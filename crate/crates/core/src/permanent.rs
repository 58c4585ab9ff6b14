//! Matrix permanents.
//!
//! [`permanent_naive`] expands over all `n!` permutations and serves as the
//! oracle. [`permanent_ryser`] is the inclusion-exclusion formula walked in
//! Gray-code order so that each subset differs from the previous one by a
//! single column, giving `O(2^n n)` work. [`permanent_parallel`] splits the
//! Gray-code index range into contiguous pieces, one per worker.
//!
//! Subset terms are accumulated into fixed-size blocks aligned to the global
//! Gray index; block sums are then combined by pairwise summation in index
//! order. The reduction tree therefore does not depend on the worker count,
//! only the incremental row sums at worker boundaries do.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64};

pub const NAIVE_MAX_N: usize = 10;
pub const RYSER_MAX_N: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Ryser,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Naive => "naive",
            Method::Ryser => "ryser",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PermanentResult {
    pub value: C64,
    pub method: Method,
    pub n: usize,
}

fn check_square(m: &ComplexMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "permanent needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.rows())
}

pub fn permanent_naive(m: &ComplexMatrix) -> Result<C64> {
    let n = check_square(m)?;
    if n > NAIVE_MAX_N {
        return Err(Error::SizeLimit {
            what: "naive permanent dimension",
            limit: NAIVE_MAX_N as u128,
            actual: n as u128,
        });
    }
    fn expand(m: &ComplexMatrix, row: usize, used: u32, acc: C64) -> C64 {
        if row == m.rows() {
            return acc;
        }
        let mut total = C64::new(0.0, 0.0);
        for c in 0..m.cols() {
            if used & (1 << c) == 0 {
                total += expand(m, row + 1, used | (1 << c), acc * m[(row, c)]);
            }
        }
        total
    }
    Ok(expand(m, 0, 0, C64::new(1.0, 0.0)))
}

pub fn permanent_ryser(m: &ComplexMatrix) -> Result<C64> {
    permanent_parallel(m, 1)
}

pub fn permanent_parallel(m: &ComplexMatrix, workers: usize) -> Result<C64> {
    let n = check_square(m)?;
    if n > RYSER_MAX_N {
        return Err(Error::SizeLimit {
            what: "Ryser permanent dimension",
            limit: RYSER_MAX_N as u128,
            actual: n as u128,
        });
    }
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be >= 1".into()));
    }
    if n == 1 {
        return Ok(m[(0, 0)]);
    }
    // Column-major copy so a Gray step touches one contiguous column.
    let cols: Vec<Vec<C64>> = (0..n).map(|c| (0..n).map(|r| m[(r, c)]).collect()).collect();

    let block_bits = n.saturating_sub(20).max(10).min(n);
    let total: u64 = 1 << n;
    let blocks = total >> block_bits;
    let workers = (workers as u64).min(blocks).max(1);

    let ranges: Vec<(u64, u64)> = (0..workers)
        .map(|w| (blocks * w / workers, blocks * (w + 1) / workers))
        .collect();

    let block_sums: Vec<Vec<C64>> = if workers == 1 {
        vec![ryser_blocks(&cols, n, block_bits, ranges[0])]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = ranges
                .iter()
                .map(|&range| {
                    let cols = &cols;
                    s.spawn(move || ryser_blocks(cols, n, block_bits, range))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("permanent worker panicked")).collect()
        })
    };
    let flat: Vec<C64> = block_sums.into_iter().flatten().collect();
    let sum = pairwise_sum(&flat);
    Ok(if n % 2 == 0 { sum } else { -sum })
}

/// Sums of signed Ryser terms for Gray indices in blocks `[lo, hi)`.
fn ryser_blocks(cols: &[Vec<C64>], n: usize, block_bits: usize, (lo, hi): (u64, u64)) -> Vec<C64> {
    let block_len: u64 = 1 << block_bits;
    let mut out = Vec::with_capacity((hi - lo) as usize);
    if lo == hi {
        return out;
    }
    let start = lo * block_len;
    let gray = |k: u64| k ^ (k >> 1);

    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let g0 = gray(start);
    for (c, col) in cols.iter().enumerate() {
        if g0 >> c & 1 == 1 {
            for (s, &v) in row_sums.iter_mut().zip(col) {
                *s += v;
            }
        }
    }

    let term = |row_sums: &[C64], g: u64| -> C64 {
        let prod = row_sums.iter().fold(C64::new(1.0, 0.0), |acc, &s| acc * s);
        if g.count_ones().is_multiple_of(2) {
            prod
        } else {
            -prod
        }
    };

    let mut k = start;
    for _ in lo..hi {
        let mut acc = C64::new(0.0, 0.0);
        for _ in 0..block_len {
            if k != start {
                let bit = k.trailing_zeros() as usize;
                let col = &cols[bit];
                if gray(k) >> bit & 1 == 1 {
                    for (s, &v) in row_sums.iter_mut().zip(col) {
                        *s += v;
                    }
                } else {
                    for (s, &v) in row_sums.iter_mut().zip(col) {
                        *s -= v;
                    }
                }
            }
            // the empty subset contributes an all-zero product
            if k != 0 {
                acc += term(&row_sums, gray(k));
            }
            k += 1;
        }
        out.push(acc);
    }
    out
}

fn pairwise_sum(xs: &[C64]) -> C64 {
    match xs.len() {
        0 => C64::new(0.0, 0.0),
        1 => xs[0],
        len => {
            let (a, b) = xs.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Ryser for matrices within its size cap, with the method recorded.
pub fn permanent(m: &ComplexMatrix) -> Result<PermanentResult> {
    let n = check_square(m)?;
    Ok(PermanentResult {
        value: permanent_ryser(m)?,
        method: Method::Ryser,
        n,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub method: Method,
    pub millis: f64,
}

/// Times one permanent per `(n, method)` on seeded Haar-like Gaussian
/// matrices. The naive method is skipped above its size cap.
pub fn benchmark(sizes: &[usize], workers: usize, seed: crate::RandomSeed) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let m = crate::matrix::haar_random_unitary(n, seed.derive(n as u64))?;
        if n <= NAIVE_MAX_N {
            let t = Instant::now();
            std::hint::black_box(permanent_naive(&m)?);
            rows.push(BenchRow {
                n,
                method: Method::Naive,
                millis: t.elapsed().as_secs_f64() * 1e3,
            });
        }
        let t = Instant::now();
        std::hint::black_box(permanent_parallel(&m, workers)?);
        rows.push(BenchRow {
            n,
            method: Method::Ryser,
            millis: t.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(w, "n,method,millis")?;
    for r in rows {
        writeln!(w, "{},{},{:.6}", r.n, r.method, r.millis)?;
    }
    Ok(())
}
