//! Dense complex matrices and the handful of structural operations the
//! simulator needs: Haar sampling, unitarity checks, direct sums and
//! occupancy-driven submatrices.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Index, IndexMut};
use std::path::Path;

use num_complex::Complex;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{Error, Result};
use crate::RandomSeed;

pub type C64 = Complex<f64>;

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        ComplexMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Builds a matrix from real row vectors; handy in tests and examples.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows
            .iter()
            .flat_map(|row| row.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scaled(&self, factor: C64) -> Self {
        self.map(|z| z * factor)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Copies the `rows x cols` block whose top-left corner is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || r0 + rows > self.rows || c0 + cols > self.cols {
            return Err(Error::Shape(format!(
                "block {rows}x{cols} at ({r0}, {c0}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)]))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Writes the plain-text matrix format: a `rows cols` header followed by
    /// one line per row of whitespace-separated `re,im` pairs.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.rows, self.cols)?;
        let mut line = String::new();
        for r in 0..self.rows {
            line.clear();
            for (c, z) in self.row(r).iter().enumerate() {
                if c > 0 {
                    line.push(' ');
                }
                write!(line, "{:.16e},{:.16e}", z.re, z.im).expect("string write");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad header {header:?}: {e}"),
            })?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse {
                line: 1,
                message: format!("header must be `rows cols`, got {header:?}"),
            });
        };
        let mut data = Vec::with_capacity(rows * cols);
        let mut seen_rows = 0;
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let before = data.len();
            for tok in line.split_whitespace() {
                let (re, im) = tok.split_once(',').ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("expected re,im pair, got {tok:?}"),
                })?;
                let parse = |s: &str| {
                    s.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno,
                        message: format!("bad number {s:?}: {e}"),
                    })
                };
                data.push(C64::new(parse(re)?, parse(im)?));
            }
            if data.len() - before != cols {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {cols} entries, got {}", data.len() - before),
                });
            }
            seen_rows += 1;
        }
        if seen_rows != rows {
            return Err(Error::Parse {
                line: seen_rows + 1,
                message: format!("expected {rows} rows, got {seen_rows}"),
            });
        }
        Self::new(rows, cols, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = crate::error::create_file(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = crate::error::open_file(path)?;
        Self::read_text(std::io::BufReader::new(f))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Draws a Haar-distributed unitary of size `dim`.
///
/// A matrix of i.i.d. standard complex Gaussians is factored with Householder
/// QR; each column of Q is then multiplied by the phase of the matching
/// diagonal entry of R, which makes the factorization unique and the result
/// exactly Haar distributed.
pub fn haar_random_unitary(dim: usize, seed: RandomSeed) -> Result<ComplexMatrix> {
    if dim == 0 {
        return Err(Error::InvalidDimension("Haar unitary needs dim >= 1".into()));
    }
    let mut rng = seed.rng();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = ComplexMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re * scale, im * scale)
    });
    let mut q = ComplexMatrix::identity(dim);
    let mut r_diag = vec![C64::new(1.0, 0.0); dim];
    let mut v = vec![C64::new(0.0, 0.0); dim];

    for k in 0..dim {
        let norm = (k..dim).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * norm;
        for i in k..dim {
            v[i] = a[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..dim).map(|i| v[i].norm_sqr()).sum();
        r_diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // A <- H A on the trailing block.
        for c in k..dim {
            let dot: C64 = (k..dim).map(|i| v[i].conj() * a[(i, c)]).sum();
            let f = dot * beta;
            for i in k..dim {
                let vi = v[i];
                a[(i, c)] -= vi * f;
            }
        }
        // Q <- Q H.
        for r in 0..dim {
            let dot: C64 = (k..dim).map(|i| q[(r, i)] * v[i]).sum();
            let f = dot * beta;
            for i in k..dim {
                let vi = v[i].conj();
                q[(r, i)] -= f * vi;
            }
        }
    }

    for (c, d) in r_diag.iter().enumerate() {
        let ph = d / d.norm();
        for r in 0..dim {
            q[(r, c)] *= ph;
        }
    }
    Ok(q)
}

/// Max-norm of `M M^dagger - I`.
pub fn unitarity_deviation(m: &ComplexMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidDimension(format!(
            "unitarity needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let prod = m.matmul(&m.adjoint())?;
    prod.max_abs_diff(&ComplexMatrix::identity(m.rows()))
}

pub fn direct_sum(blocks: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    if blocks.is_empty() {
        return Err(Error::InvalidArgument("direct sum of an empty list".into()));
    }
    let rows: usize = blocks.iter().map(|b| b.rows()).sum();
    let cols: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        for r in 0..b.rows() {
            for c in 0..b.cols() {
                out[(r0 + r, c0 + c)] = b[(r, c)];
            }
        }
        r0 += b.rows();
        c0 += b.cols();
    }
    Ok(out)
}

/// Repeats row `i` of `m` `row_mult[i]` times and column `j` `col_mult[j]`
/// times, giving the square matrix whose permanent drives a pattern
/// probability.
pub fn submatrix(m: &ComplexMatrix, row_mult: &[usize], col_mult: &[usize]) -> Result<ComplexMatrix> {
    if row_mult.len() != m.rows() || col_mult.len() != m.cols() {
        return Err(Error::Shape(format!(
            "multiplicity lists ({}, {}) do not match {}x{} matrix",
            row_mult.len(),
            col_mult.len(),
            m.rows(),
            m.cols()
        )));
    }
    let rows = expand(row_mult);
    let cols = expand(col_mult);
    if rows.len() != cols.len() {
        return Err(Error::Shape(format!(
            "row total {} differs from column total {}",
            rows.len(),
            cols.len()
        )));
    }
    if rows.is_empty() {
        return Err(Error::Shape("empty submatrix".into()));
    }
    Ok(ComplexMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])]))
}

fn expand(mult: &[usize]) -> Vec<usize> {
    mult.iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat_n(i, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn haar_one_dimensional_is_a_phase() {
        for s in 0..10 {
            let m = haar_random_unitary(1, RandomSeed(s)).unwrap();
            assert!((m[(0, 0)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_is_unitary_and_deterministic() {
        let m = haar_random_unitary(4, RandomSeed(7)).unwrap();
        assert!(unitarity_deviation(&m).unwrap() <= 1e-10);
        let a = haar_random_unitary(8, RandomSeed(42)).unwrap();
        let b = haar_random_unitary(8, RandomSeed(42)).unwrap();
        assert_eq!(a, b);
        let c = haar_random_unitary(8, RandomSeed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn haar_rejects_zero_dim() {
        assert!(matches!(haar_random_unitary(0, RandomSeed(1)), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn haar_moments_match_uniform_measure() {
        // E|U_00|^2 = 1/d and E|U_00|^4 = 2/(d(d+1)) under the Haar measure.
        let d = 3;
        let trials = 20_000;
        let (mut m2, mut m4) = (0.0, 0.0);
        for s in 0..trials {
            let u = haar_random_unitary(d, RandomSeed(s)).unwrap();
            let p = u[(0, 0)].norm_sqr();
            m2 += p;
            m4 += p * p;
        }
        m2 /= trials as f64;
        m4 /= trials as f64;
        assert!((m2 - 1.0 / 3.0).abs() < 0.01, "{m2}");
        assert!((m4 - 2.0 / 12.0).abs() < 0.01, "{m4}");
        // Phase of the diagonal entry must be uniform, not biased to the real axis.
        let mean_re: f64 = (0..trials)
            .map(|s| {
                let z = haar_random_unitary(d, RandomSeed(s)).unwrap()[(0, 0)];
                z.re / z.norm()
            })
            .sum::<f64>()
            / trials as f64;
        assert!(mean_re.abs() < 0.02, "{mean_re}");
    }

    #[test]
    fn unitarity_deviation_cases() {
        assert_eq!(unitarity_deviation(&ComplexMatrix::identity(3)).unwrap(), 0.0);
        let two = ComplexMatrix::identity(2).scaled(c(2.0, 0.0));
        assert_eq!(unitarity_deviation(&two).unwrap(), 3.0);
        let u = haar_random_unitary(5, RandomSeed(11)).unwrap();
        assert!(unitarity_deviation(&u).unwrap() <= 1e-10);
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(unitarity_deviation(&rect), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn direct_sum_layout() {
        let one = ComplexMatrix::identity(1);
        assert_eq!(direct_sum(&[one.clone(), one]).unwrap(), ComplexMatrix::identity(2));

        let a = ComplexMatrix::from_fn(2, 2, |r, k| c((r * 2 + k + 1) as f64, 0.0));
        let b = ComplexMatrix::from_fn(3, 3, |r, k| c(0.0, (r * 3 + k + 1) as f64));
        let s = direct_sum(&[a.clone(), b.clone()]).unwrap();
        assert_eq!((s.rows(), s.cols()), (5, 5));
        for r in 0..5 {
            for k in 0..5 {
                let expect = match (r < 2, k < 2) {
                    (true, true) => a[(r, k)],
                    (false, false) => b[(r - 2, k - 2)],
                    _ => c(0.0, 0.0),
                };
                assert_eq!(s[(r, k)], expect);
            }
        }
        assert!(matches!(direct_sum(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn direct_sum_of_unitaries_is_unitary() {
        let blocks: Vec<_> = (0..4)
            .map(|s| haar_random_unitary(3, RandomSeed(s)).unwrap())
            .collect();
        let s = direct_sum(&blocks).unwrap();
        assert!(unitarity_deviation(&s).unwrap() <= 1e-10);
    }

    #[test]
    fn submatrix_cases() {
        let id = ComplexMatrix::identity(2);
        assert_eq!(submatrix(&id, &[1, 1], &[1, 1]).unwrap(), id);

        let m = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let s = submatrix(&m, &[2, 0], &[1, 1]).unwrap();
        assert_eq!(s, ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[1.0, 2.0]]).unwrap());

        let m3 = ComplexMatrix::from_fn(3, 3, |r, k| c((10 * r + k) as f64, 0.0));
        let minor = submatrix(&m3, &[1, 0, 1], &[0, 1, 1]).unwrap();
        assert_eq!(minor, ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[21.0, 22.0]]).unwrap());

        assert!(matches!(submatrix(&m, &[1, 1], &[2, 1]), Err(Error::Shape(_))));
        assert!(matches!(submatrix(&m, &[1], &[1]), Err(Error::Shape(_))));
    }

    #[test]
    fn text_format_round_trips_exactly() {
        let m = haar_random_unitary(6, RandomSeed(3)).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("6 6\n"));
        let back = ComplexMatrix::read_text(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn text_format_rejects_garbage() {
        assert!(ComplexMatrix::read_text(&b"2 2\n1,0 0,0\n"[..]).is_err());
        assert!(ComplexMatrix::read_text(&b"1 1\n1;0\n"[..]).is_err());
        assert!(ComplexMatrix::read_text(&b"x\n"[..]).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        let r = ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]);
        assert!(r.is_err());
    }
}
