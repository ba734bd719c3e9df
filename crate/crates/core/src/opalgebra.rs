//! Arithmetic over the commutative coefficient algebra `C(Y)` with `Y` a finite
//! set of `m` points, and dense complex matrices over it.
//!
//! An [`AValue`] is an `m`-tuple of complex numbers and an [`AMatrix`] is an
//! `m`-tuple of complex matrices of a common shape. Every operation acts on the
//! fibers independently, so the result in fiber `k` only ever depends on the
//! inputs in fiber `k`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;
pub use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix used for a single fiber.
pub type CMat = DMatrix<Complex64>;

/// Relative pivot threshold: a fiber is singular when its smallest pivot is
/// below `PIVOT_RTOL * (largest pivot + 1)`.
pub const PIVOT_RTOL: f64 = 1e-12;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Element of `C(Y)`: one complex number per point of `Y`.
#[derive(Clone, PartialEq)]
pub struct AValue {
    fibers: Vec<Complex64>,
}

impl AValue {
    pub fn new(fibers: Vec<Complex64>) -> Result<Self> {
        if fibers.is_empty() {
            return Err(Error::InvalidInput("an AValue needs at least one fiber".into()));
        }
        Ok(AValue { fibers })
    }

    pub fn splat(m: usize, value: Complex64) -> Self {
        assert!(m >= 1, "fiber count must be positive");
        AValue { fibers: vec![value; m] }
    }

    pub fn from_fn(m: usize, f: impl FnMut(usize) -> Complex64) -> Self {
        assert!(m >= 1, "fiber count must be positive");
        AValue { fibers: (0..m).map(f).collect() }
    }

    pub fn one(m: usize) -> Self {
        Self::splat(m, Complex64::new(1.0, 0.0))
    }

    pub fn zero(m: usize) -> Self {
        Self::splat(m, Complex64::new(0.0, 0.0))
    }

    pub fn m(&self) -> usize {
        self.fibers.len()
    }

    pub fn fiber(&self, k: usize) -> Complex64 {
        self.fibers[k]
    }

    pub fn fibers(&self) -> &[Complex64] {
        &self.fibers
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        AValue { fibers: self.fibers.iter().map(|&z| f(z)).collect() }
    }

    pub fn zip_with(&self, other: &AValue, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        check_fibers(self.m(), other.m())?;
        Ok(AValue {
            fibers: self.fibers.iter().zip(&other.fibers).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Fiberwise inverse; defined iff no fiber vanishes.
    pub fn inv(&self) -> Result<Self> {
        if let Some(k) = self.fibers.iter().position(|z| *z == Complex64::new(0.0, 0.0)) {
            return Err(Error::ZeroFiber { fiber: k });
        }
        Ok(self.map(|z| z.inv()))
    }

    pub fn max_abs(&self) -> f64 {
        self.fibers.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl fmt::Debug for AValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("AValue").field(&self.fibers).finish()
    }
}

macro_rules! avalue_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &AValue {
            type Output = AValue;
            fn $method(self, rhs: &AValue) -> AValue {
                assert_eq!(self.m(), rhs.m(), "fiber-count mismatch");
                AValue {
                    fibers: self.fibers.iter().zip(&rhs.fibers).map(|(&a, &b)| a $op b).collect(),
                }
            }
        }
        impl $trait for AValue {
            type Output = AValue;
            fn $method(self, rhs: AValue) -> AValue {
                &self $op &rhs
            }
        }
    };
}

avalue_binop!(Add, add, +);
avalue_binop!(Sub, sub, -);
avalue_binop!(Mul, mul, *);
avalue_binop!(Div, div, /);

impl Neg for &AValue {
    type Output = AValue;
    fn neg(self) -> AValue {
        self.map(|z| -z)
    }
}

fn check_fibers(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::FiberMismatch { left, right });
    }
    Ok(())
}

/// Partial-pivoting LU factorization of a single complex matrix with at least
/// as many rows as columns. Elimination always runs to completion; singularity
/// is judged afterwards from the recorded pivots.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMat,
    perm: Vec<usize>,
    swaps: usize,
}

impl Lu {
    pub fn factor(a: &CMat) -> Self {
        let (rows, cols) = a.shape();
        assert!(rows >= cols, "LU needs rows >= cols");
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..rows).collect();
        let mut swaps = 0;
        for j in 0..cols {
            let mut best = j;
            let mut best_abs = lu[(j, j)].norm();
            for i in (j + 1)..rows {
                let v = lu[(i, j)].norm();
                if v > best_abs {
                    best = i;
                    best_abs = v;
                }
            }
            if best != j {
                lu.swap_rows(best, j);
                perm.swap(best, j);
                swaps += 1;
            }
            let pivot = lu[(j, j)];
            if pivot == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i in (j + 1)..rows {
                let factor = lu[(i, j)] / pivot;
                lu[(i, j)] = factor;
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for k in (j + 1)..cols {
                    let u = lu[(j, k)];
                    lu[(i, k)] -= factor * u;
                }
            }
        }
        Lu { lu, perm, swaps }
    }

    fn ncols(&self) -> usize {
        self.lu.ncols()
    }

    pub fn pivots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.ncols()).map(move |j| self.lu[(j, j)].norm())
    }

    pub fn min_pivot(&self) -> f64 {
        self.pivots().fold(f64::INFINITY, f64::min)
    }

    pub fn max_pivot(&self) -> f64 {
        self.pivots().fold(0.0, f64::max)
    }

    pub fn is_singular(&self) -> bool {
        self.ncols() > 0 && self.min_pivot() < PIVOT_RTOL * (self.max_pivot() + 1.0)
    }

    pub fn det(&self) -> Complex64 {
        assert_eq!(self.lu.nrows(), self.ncols(), "determinant of a non-square factorization");
        let mut d = (0..self.ncols()).fold(Complex64::new(1.0, 0.0), |acc, j| acc * self.lu[(j, j)]);
        if self.swaps % 2 == 1 {
            d = -d;
        }
        d
    }

    /// Solves `A x = b` for square `A`. Callers are expected to have checked
    /// [`Lu::is_singular`] first.
    pub fn solve(&self, b: &CMat) -> CMat {
        let n = self.ncols();
        assert_eq!(self.lu.nrows(), n);
        assert_eq!(b.nrows(), n);
        let mut x = CMat::zeros(n, b.ncols());
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut s = b[(self.perm[i], c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        x
    }
}

/// An `m`-tuple of complex `rows x cols` matrices.
#[derive(Clone, PartialEq)]
pub struct AMatrix {
    rows: usize,
    cols: usize,
    fibers: Vec<CMat>,
}

impl fmt::Debug for AMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AMatrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("fibers", &self.fibers)
            .finish()
    }
}

impl AMatrix {
    pub fn new(fibers: Vec<CMat>) -> Result<Self> {
        let first = fibers
            .first()
            .ok_or_else(|| Error::InvalidInput("an AMatrix needs at least one fiber".into()))?;
        let (rows, cols) = first.shape();
        if let Some(bad) = fibers.iter().find(|f| f.shape() != (rows, cols)) {
            return Err(Error::DimensionMismatch(format!(
                "fiber shapes {:?} and {:?}",
                (rows, cols),
                bad.shape()
            )));
        }
        Ok(AMatrix { rows, cols, fibers })
    }

    pub fn from_fn(m: usize, rows: usize, cols: usize, mut f: impl FnMut(usize, usize, usize) -> Complex64) -> Self {
        assert!(m >= 1, "fiber count must be positive");
        let fibers = (0..m).map(|k| CMat::from_fn(rows, cols, |i, j| f(k, i, j))).collect();
        AMatrix { rows, cols, fibers }
    }

    /// Same matrix in every fiber.
    pub fn replicate(m: usize, fiber: CMat) -> Self {
        assert!(m >= 1, "fiber count must be positive");
        let (rows, cols) = fiber.shape();
        AMatrix { rows, cols, fibers: vec![fiber; m] }
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Self::replicate(m, CMat::identity(n, n))
    }

    pub fn zeros(m: usize, rows: usize, cols: usize) -> Self {
        Self::replicate(m, CMat::zeros(rows, cols))
    }

    /// `value * I_n`, fiberwise.
    pub fn scalar(value: &AValue, n: usize) -> Self {
        AMatrix {
            rows: n,
            cols: n,
            fibers: value.fibers().iter().map(|&z| CMat::identity(n, n) * z).collect(),
        }
    }

    /// `1 x 1` matrix holding `value`.
    pub fn from_avalue(value: &AValue) -> Self {
        Self::scalar(value, 1)
    }

    pub fn m(&self) -> usize {
        self.fibers.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn fiber(&self, k: usize) -> &CMat {
        &self.fibers[k]
    }

    pub fn fibers(&self) -> &[CMat] {
        &self.fibers
    }

    pub fn into_fibers(self) -> Vec<CMat> {
        self.fibers
    }

    pub fn entry(&self, i: usize, j: usize) -> AValue {
        AValue { fibers: self.fibers.iter().map(|f| f[(i, j)]).collect() }
    }

    /// Applies `f` to every fiber independently.
    pub fn map_fibers(&self, f: impl Fn(&CMat) -> CMat) -> Result<Self> {
        AMatrix::new(self.fibers.iter().map(f).collect())
    }

    fn zip_fibers(&self, other: &AMatrix, f: impl Fn(&CMat, &CMat) -> CMat) -> Result<Self> {
        check_fibers(self.m(), other.m())?;
        AMatrix::new(self.fibers.iter().zip(&other.fibers).map(|(a, b)| f(a, b)).collect())
    }

    fn require_same_shape(&self, other: &AMatrix) -> Result<()> {
        check_fibers(self.m(), other.m())?;
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }

    fn require_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        Ok(())
    }

    pub fn add(&self, other: &AMatrix) -> Result<Self> {
        self.require_same_shape(other)?;
        self.zip_fibers(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &AMatrix) -> Result<Self> {
        self.require_same_shape(other)?;
        self.zip_fibers(other, |a, b| a - b)
    }

    /// Fiberwise matrix product.
    pub fn matmul(&self, other: &AMatrix) -> Result<Self> {
        check_fibers(self.m(), other.m())?;
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        self.zip_fibers(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        AMatrix {
            rows: self.rows,
            cols: self.cols,
            fibers: self.fibers.iter().map(|f| f * c).collect(),
        }
    }

    /// Multiplies fiber `k` by `value.fiber(k)`.
    pub fn scale_by(&self, value: &AValue) -> Result<Self> {
        check_fibers(self.m(), value.m())?;
        AMatrix::new(self.fibers.iter().zip(value.fibers()).map(|(f, &z)| f * z).collect())
    }

    pub fn neg(&self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// `self - I`, for square matrices.
    pub fn minus_identity(&self) -> Result<Self> {
        self.require_square()?;
        self.map_fibers(|f| f - CMat::identity(self.rows, self.cols))
    }

    /// `I - self`, for square matrices.
    pub fn identity_minus(&self) -> Result<Self> {
        self.require_square()?;
        self.map_fibers(|f| CMat::identity(self.rows, self.cols) - f)
    }

    pub fn transpose(&self) -> Self {
        AMatrix {
            rows: self.cols,
            cols: self.rows,
            fibers: self.fibers.iter().map(|f| f.transpose()).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        AMatrix {
            rows: self.cols,
            cols: self.rows,
            fibers: self.fibers.iter().map(|f| f.adjoint()).collect(),
        }
    }

    pub fn block(&self, row0: usize, col0: usize, nrows: usize, ncols: usize) -> Result<Self> {
        if row0 + nrows > self.rows || col0 + ncols > self.cols {
            return Err(Error::DimensionMismatch(format!(
                "block ({row0},{col0})+({nrows},{ncols}) outside {:?}",
                self.shape()
            )));
        }
        self.map_fibers(|f| f.view((row0, col0), (nrows, ncols)).into_owned())
    }

    /// `[self | other]`.
    pub fn hstack(&self, other: &AMatrix) -> Result<Self> {
        check_fibers(self.m(), other.m())?;
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch("hstack needs equal row counts".into()));
        }
        let (r, c1, c2) = (self.rows, self.cols, other.cols);
        self.zip_fibers(other, |a, b| {
            CMat::from_fn(r, c1 + c2, |i, j| if j < c1 { a[(i, j)] } else { b[(i, j - c1)] })
        })
    }

    /// `[self ; other]`.
    pub fn vstack(&self, other: &AMatrix) -> Result<Self> {
        check_fibers(self.m(), other.m())?;
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch("vstack needs equal column counts".into()));
        }
        let (r1, r2, c) = (self.rows, other.rows, self.cols);
        self.zip_fibers(other, |a, b| {
            CMat::from_fn(r1 + r2, c, |i, j| if i < r1 { a[(i, j)] } else { b[(i - r1, j)] })
        })
    }

    /// Assembles `[[a, b], [c, d]]`.
    pub fn from_blocks(a: &AMatrix, b: &AMatrix, c: &AMatrix, d: &AMatrix) -> Result<Self> {
        a.hstack(b)?.vstack(&c.hstack(d)?)
    }

    pub fn trace(&self) -> Result<AValue> {
        self.require_square()?;
        Ok(AValue { fibers: self.fibers.iter().map(|f| f.trace()).collect() })
    }

    /// Fiberwise determinant via pivoted elimination.
    pub fn det(&self) -> Result<AValue> {
        self.require_square()?;
        Ok(AValue { fibers: self.fibers.iter().map(|f| Lu::factor(f).det()).collect() })
    }

    pub fn lu(&self) -> Result<Vec<Lu>> {
        self.require_square()?;
        Ok(self.fibers.iter().map(Lu::factor).collect())
    }

    /// Fiberwise inverse; fails with [`Error::SingularFiber`] on the first
    /// fiber whose pivots fall below the singularity threshold.
    pub fn inv(&self) -> Result<Self> {
        self.require_square()?;
        let n = self.rows;
        let mut out = Vec::with_capacity(self.m());
        for (k, f) in self.fibers.iter().enumerate() {
            let lu = Lu::factor(f);
            if lu.is_singular() {
                return Err(Error::SingularFiber { fiber: k, pivot: lu.min_pivot() });
            }
            out.push(lu.solve(&CMat::identity(n, n)));
        }
        AMatrix::new(out)
    }

    /// Solves `self * x = rhs` fiberwise.
    pub fn solve(&self, rhs: &AMatrix) -> Result<Self> {
        self.require_square()?;
        check_fibers(self.m(), rhs.m())?;
        if rhs.rows != self.rows {
            return Err(Error::DimensionMismatch("solve needs matching row counts".into()));
        }
        let mut out = Vec::with_capacity(self.m());
        for (k, (f, b)) in self.fibers.iter().zip(&rhs.fibers).enumerate() {
            let lu = Lu::factor(f);
            if lu.is_singular() {
                return Err(Error::SingularFiber { fiber: k, pivot: lu.min_pivot() });
            }
            out.push(lu.solve(b));
        }
        AMatrix::new(out)
    }

    /// True when some fiber is numerically singular.
    pub fn is_singular(&self) -> Result<bool> {
        Ok(self.lu()?.iter().any(Lu::is_singular))
    }

    /// Full column rank in every fiber, judged with the pivot threshold.
    pub fn rank_deficient_fiber(&self) -> Option<usize> {
        if self.rows < self.cols {
            return Some(0);
        }
        self.fibers.iter().position(|f| Lu::factor(f).is_singular())
    }

    /// Largest entry modulus over all fibers.
    pub fn max_abs(&self) -> f64 {
        self.fibers
            .iter()
            .flat_map(|f| f.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    /// Induced infinity norm (max row sum), maximized over fibers.
    pub fn norm_inf(&self) -> f64 {
        self.fibers.iter().map(fiber_norm_inf).fold(0.0, f64::max)
    }

    /// Per-fiber induced infinity norms.
    pub fn fiber_norms_inf(&self) -> Vec<f64> {
        self.fibers.iter().map(fiber_norm_inf).collect()
    }

    /// `self * other - other * self`.
    pub fn commutator(&self, other: &AMatrix) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn fiber_count_matches(&self, m: usize) -> Result<()> {
        check_fibers(self.m(), m)
    }
}

/// Largest entry modulus of a single fiber.
pub fn cmat_max_abs(f: &CMat) -> f64 {
    f.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn fiber_norm_inf(f: &CMat) -> f64 {
    f.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// JSON form of an [`AMatrix`]: row-major entries, one array per fiber.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&AMatrix> for MatrixJson {
    fn from(x: &AMatrix) -> Self {
        let flat = |part: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            x.fibers()
                .iter()
                .map(|f| f.row_iter().flat_map(|row| row.iter().map(part).collect::<Vec<_>>()).collect())
                .collect()
        };
        MatrixJson { rows: x.rows(), cols: x.cols(), re: flat(|z| z.re), im: flat(|z| z.im) }
    }
}

impl TryFrom<&MatrixJson> for AMatrix {
    type Error = Error;

    fn try_from(doc: &MatrixJson) -> Result<AMatrix> {
        if doc.re.len() != doc.im.len() || doc.re.is_empty() {
            return Err(Error::InvalidInput("re and im need the same positive number of fibers".into()));
        }
        let size = doc.rows * doc.cols;
        let fibers = doc
            .re
            .iter()
            .zip(&doc.im)
            .map(|(re, im)| {
                if re.len() != size || im.len() != size {
                    return Err(Error::InvalidInput(format!("fiber holds {} entries, expected {size}", re.len())));
                }
                Ok(CMat::from_fn(doc.rows, doc.cols, |i, j| Complex64::new(re[i * doc.cols + j], im[i * doc.cols + j])))
            })
            .collect::<Result<Vec<_>>>()?;
        AMatrix::new(fibers)
    }
}

/// JSON form of an [`AValue`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&AValue> for ValueJson {
    fn from(v: &AValue) -> Self {
        ValueJson { re: v.fibers().iter().map(|z| z.re).collect(), im: v.fibers().iter().map(|z| z.im).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn naive_mul(a: &CMat, b: &CMat) -> CMat {
        let mut out = CMat::zeros(a.nrows(), b.ncols());
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..a.ncols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn cofactor_det(a: &CMat) -> Complex64 {
        let n = a.nrows();
        if n == 1 {
            return a[(0, 0)];
        }
        let mut total = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let minor = CMat::from_fn(n - 1, n - 1, |r, c| a[(r + 1, if c < j { c } else { c + 1 })]);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            total += a[(0, j)] * cofactor_det(&minor) * sign;
        }
        total
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = SeededRng::new(1);
        let x = rng.amatrix(2, 3, 3);
        let i3 = AMatrix::identity(2, 3);
        assert_eq!(i3.matmul(&x).unwrap(), x);
    }

    #[test]
    fn scalar_product() {
        let two = AMatrix::scalar(&AValue::splat(1, c64(2.0, 0.0)), 1);
        let three = AMatrix::scalar(&AValue::splat(1, c64(3.0, 0.0)), 1);
        assert_eq!(two.matmul(&three).unwrap().fiber(0)[(0, 0)], c64(6.0, 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(2);
        let x = rng.amatrix(2, 4, 4);
        let y = rng.amatrix(2, 4, 4);
        let p = x.matmul(&y).unwrap();
        for k in 0..2 {
            let diff = cmat_max_abs(&(p.fiber(k) - naive_mul(x.fiber(k), y.fiber(k))));
            assert!(diff <= 1e-14, "diff {diff}");
        }
    }

    #[test]
    fn mismatches_are_errors() {
        let a = AMatrix::zeros(1, 2, 3);
        let b = AMatrix::zeros(1, 2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::DimensionMismatch(_))));
        let c = AMatrix::zeros(2, 3, 3);
        assert!(matches!(a.matmul(&c), Err(Error::FiberMismatch { .. })));
        assert!(matches!(a.det(), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn determinants() {
        let d = AMatrix::identity(3, 4).det().unwrap();
        assert!(d.fibers().iter().all(|z| *z == c64(1.0, 0.0)));
        let two = AMatrix::scalar(&AValue::splat(1, c64(2.0, 0.0)), 1);
        assert_eq!(two.det().unwrap().fiber(0), c64(2.0, 0.0));

        let mut rng = SeededRng::new(3);
        for _ in 0..20 {
            let x = rng.amatrix(1, 3, 3);
            let d = x.det().unwrap().fiber(0);
            let oracle = cofactor_det(x.fiber(0));
            assert!((d - oracle).norm() <= 1e-12 * oracle.norm().max(1e-300), "{d} vs {oracle}");
        }
    }

    #[test]
    fn inverses() {
        assert_eq!(AMatrix::identity(2, 3).inv().unwrap(), AMatrix::identity(2, 3));
        let diag = AMatrix::new(vec![CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c64(2.0, 0.0),
            c64(4.0, 0.0),
        ]))])
        .unwrap();
        let inv = diag.inv().unwrap();
        assert_eq!(inv.fiber(0)[(0, 0)], c64(0.5, 0.0));
        assert_eq!(inv.fiber(0)[(1, 1)], c64(0.25, 0.0));

        let mut rng = SeededRng::new(4);
        let x = rng.well_conditioned(2, 5);
        let residual = x.matmul(&x.inv().unwrap()).unwrap().minus_identity().unwrap().norm_inf();
        assert!(residual <= 1e-10, "{residual}");
    }

    #[test]
    fn singular_fiber_is_reported() {
        let ok = CMat::identity(2, 2);
        let bad = CMat::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(2.0, 0.0), c64(2.0, 0.0), c64(4.0, 0.0)]);
        let x = AMatrix::new(vec![ok, bad]).unwrap();
        match x.inv() {
            Err(Error::SingularFiber { fiber, .. }) => assert_eq!(fiber, 1),
            other => panic!("expected singular fiber, got {other:?}"),
        }
    }

    #[test]
    fn det_is_multiplicative() {
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let x = rng.well_conditioned(1, 4);
            let y = rng.well_conditioned(1, 4);
            let lhs = x.matmul(&y).unwrap().det().unwrap().fiber(0);
            let dx = x.det().unwrap().fiber(0);
            let dy = y.det().unwrap().fiber(0);
            assert!((lhs - dx * dy).norm() <= 1e-10 * (1.0 + (dx * dy).norm()));
        }
    }

    #[test]
    fn fibers_factor_exactly() {
        let mut rng = SeededRng::new(6);
        let x = rng.well_conditioned(3, 4);
        let y = rng.well_conditioned(3, 4);
        let prod = x.matmul(&y).unwrap();
        let det = x.det().unwrap();
        let inv = x.inv().unwrap();
        for k in 0..3 {
            let xk = AMatrix::new(vec![x.fiber(k).clone()]).unwrap();
            let yk = AMatrix::new(vec![y.fiber(k).clone()]).unwrap();
            assert_eq!(xk.matmul(&yk).unwrap().fiber(0), prod.fiber(k));
            assert_eq!(xk.det().unwrap().fiber(0), det.fiber(k));
            assert_eq!(xk.inv().unwrap().fiber(0), inv.fiber(k));
        }
    }
}
