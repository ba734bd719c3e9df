//! Seeded random streams for property sweeps and the self-test.
//!
//! The stream is SplitMix64 seeded with one explicit `u64`. Uniform doubles
//! take the top 53 bits of each output, so fixtures are reproducible across
//! platforms.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::opalgebra::{AMatrix, AValue, CMat, Complex64};

pub struct SeededRng {
    inner: SplitMix64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { inner: SplitMix64::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.unit() * n as f64) as usize % n.max(1)
    }

    /// Real and imaginary parts uniform on `[-1, 1)`.
    pub fn complex(&mut self) -> Complex64 {
        Complex64::new(self.uniform(-1.0, 1.0), self.uniform(-1.0, 1.0))
    }

    /// Uniform in the open disk of the given radius.
    pub fn in_disk(&mut self, radius: f64) -> Complex64 {
        let r = radius * self.unit().sqrt();
        let theta = self.uniform(0.0, std::f64::consts::TAU);
        Complex64::from_polar(r, theta)
    }

    /// Uniform in the annulus `lo <= |z| < hi`.
    pub fn in_annulus(&mut self, lo: f64, hi: f64) -> Complex64 {
        let r = self.uniform(lo, hi);
        let theta = self.uniform(0.0, std::f64::consts::TAU);
        Complex64::from_polar(r, theta)
    }

    pub fn cmat(&mut self, rows: usize, cols: usize) -> CMat {
        CMat::from_fn(rows, cols, |_, _| self.complex())
    }

    /// Small-integer entries in `[-bound, bound]`, exact in floating point.
    pub fn integer_cmat(&mut self, rows: usize, cols: usize, bound: i64) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            let re = self.below((2 * bound + 1) as usize) as i64 - bound;
            Complex64::new(re as f64, 0.0)
        })
    }

    pub fn avalue(&mut self, m: usize) -> AValue {
        AValue::from_fn(m, |_| self.complex())
    }

    pub fn amatrix(&mut self, m: usize, rows: usize, cols: usize) -> AMatrix {
        AMatrix::new((0..m).map(|_| self.cmat(rows, cols)).collect()).expect("m >= 1")
    }

    /// `I + E` with `‖E‖_∞ <= 1/2`: condition number at most 3.
    pub fn well_conditioned(&mut self, m: usize, n: usize) -> AMatrix {
        let scale = 0.5 / (n as f64 * std::f64::consts::SQRT_2);
        AMatrix::new(
            (0..m)
                .map(|_| CMat::identity(n, n) + self.cmat(n, n) * Complex64::new(scale, 0.0))
                .collect(),
        )
        .expect("m >= 1")
    }

    /// Random matrix scaled so that its infinity norm is at most `bound`.
    pub fn small(&mut self, m: usize, rows: usize, cols: usize, bound: f64) -> AMatrix {
        let scale = bound / (cols.max(1) as f64 * std::f64::consts::SQRT_2);
        self.amatrix(m, rows, cols).scale(Complex64::new(scale, 0.0))
    }
}
