//! Szegő kernels and their correlation determinants at genus 0 and genus 1.
//!
//! Genus 1 uses theta functions with half-integer characteristics
//! `θ[a, b](z | τ) = Σ_n exp(πiτ(n+a)² + 2πi(n+a)(z+b))`, the prime form
//! `E(x, y) = θ₁(y-x) / θ₁'(0)` with `θ₁ = θ[½, ½]`, and the kernel
//! `S(x, y) = θ[ξ](y-x) / (θ[ξ](0) E(x, y))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalgebra::{CMat, Complex64, Lu};

/// Default certified bound on the lattice-sum tail, relative to the largest
/// term (or 1 if the terms are small).
pub const DEFAULT_TAIL_BOUND: f64 = 1e-15;

/// Points closer than this modulo the period lattice count as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-12;

/// `|θ[ξ](0)|` below this makes the characteristic singular.
pub const SINGULAR_THETA: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticData {
    pub modulus: Complex64,
    /// `(ξ', ξ'')`, each a half-integer.
    pub characteristic: (f64, f64),
    /// Terms `n0 - cutoff ..= n0 + cutoff` around the dominant index `n0`.
    pub cutoff: usize,
    pub tail_bound: f64,
}

fn is_half_integer(x: f64) -> bool {
    (2.0 * x).fract() == 0.0 && x.is_finite()
}

/// Geometric majorant of `Σ_{k > K} (c + k + 1)^p e^{-πy(k-½)²}`, `p ∈ {0, 1}`.
fn tail_majorant(y: f64, cutoff: usize, c: f64, p: i32) -> f64 {
    let k = cutoff as f64 + 1.0;
    let first = (c + k + 1.0).powi(p) * (-PI * y * (k - 0.5) * (k - 0.5)).exp();
    let growth = ((c + k + 2.0) / (c + k + 1.0)).powi(p);
    let ratio = growth * (-2.0 * PI * y * k).exp();
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    2.0 * first / (1.0 - ratio)
}

impl EllipticData {
    /// Cutoff chosen so that the tail majorant stays a thousand times below
    /// [`DEFAULT_TAIL_BOUND`].
    pub fn new(modulus: Complex64, characteristic: (f64, f64)) -> Result<Self> {
        Self::validate(modulus, characteristic)?;
        let y = modulus.im;
        let mut cutoff = 2;
        while tail_majorant(y, cutoff, 0.0, 0) > 1e-3 * DEFAULT_TAIL_BOUND && cutoff < 10_000 {
            cutoff += 1;
        }
        Ok(EllipticData { modulus, characteristic, cutoff, tail_bound: DEFAULT_TAIL_BOUND })
    }

    pub fn with_cutoff(modulus: Complex64, characteristic: (f64, f64), cutoff: usize, tail_bound: f64) -> Result<Self> {
        Self::validate(modulus, characteristic)?;
        Ok(EllipticData { modulus, characteristic, cutoff, tail_bound })
    }

    fn validate(modulus: Complex64, characteristic: (f64, f64)) -> Result<()> {
        if !modulus.is_finite() || modulus.im <= 0.0 {
            return Err(Error::InvalidInput(format!("modulus {modulus} is not in the upper half-plane")));
        }
        if !is_half_integer(characteristic.0) || !is_half_integer(characteristic.1) {
            return Err(Error::InvalidInput(format!("characteristic {characteristic:?} is not half-integral")));
        }
        Ok(())
    }

    /// Same modulus and cutoff, different characteristic.
    pub fn with_characteristic(&self, characteristic: (f64, f64)) -> Result<Self> {
        Self::with_cutoff(self.modulus, characteristic, self.cutoff, self.tail_bound)
    }

    /// `+1` for even and `-1` for odd characteristics.
    pub fn parity(&self) -> f64 {
        if (4.0 * self.characteristic.0 * self.characteristic.1).rem_euclid(2.0) == 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// `Σ_n w(n+a) exp(πiτ(n+a)² + 2πi(n+a)(z+b))` with `w = 1` (`derivative =
/// false`) or `w = 2πi(n+a)`.
fn lattice_sum(z: Complex64, data: &EllipticData, derivative: bool) -> Result<Complex64> {
    let tau = data.modulus;
    let (a, b) = data.characteristic;
    let y = tau.im;
    let i = Complex64::new(0.0, 1.0);
    let shift = z.im / y;
    let n0 = (-shift - a).round();
    let k = data.cutoff as i64;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut biggest: f64 = 0.0;
    for j in -k..=k {
        let x = n0 + j as f64 + a;
        let exponent = PI * i * tau * x * x + 2.0 * PI * i * x * (z + b);
        let mut term = exponent.exp();
        if derivative {
            term *= 2.0 * PI * i * x;
        }
        biggest = biggest.max(term.norm());
        sum += term;
    }
    // largest term modulus, attained at n + a = -Im z / Im τ
    let peak = (PI * z.im * z.im / y).exp();
    let tail = if derivative {
        2.0 * PI * peak * tail_majorant(y, data.cutoff, (n0 + a).abs() + shift.abs(), 1)
    } else {
        peak * tail_majorant(y, data.cutoff, 0.0, 0)
    };
    let scale = biggest.max(1.0);
    if tail > data.tail_bound * scale {
        return Err(Error::TailBoundViolated { tail: tail / scale, bound: data.tail_bound });
    }
    Ok(sum)
}

pub fn theta(z: Complex64, data: &EllipticData) -> Result<Complex64> {
    lattice_sum(z, data, false)
}

pub fn theta_derivative(z: Complex64, data: &EllipticData) -> Result<Complex64> {
    lattice_sum(z, data, true)
}

/// `θ[ξ](z + m + nτ) = multiplier · θ[ξ](z)`.
pub fn theta_multiplier(z: Complex64, m: i64, n: i64, data: &EllipticData) -> Complex64 {
    let (a, b) = data.characteristic;
    let i = Complex64::new(0.0, 1.0);
    let (m, n) = (m as f64, n as f64);
    (2.0 * PI * i * a * m - PI * i * n * n * data.modulus - 2.0 * PI * i * n * (z + b)).exp()
}

/// `|θ(z + m + nτ) - multiplier · θ(z)|` relative to `max(1, |θ(z + m + nτ)|)`.
pub fn quasi_periodicity_residual(z: Complex64, m: i64, n: i64, data: &EllipticData) -> Result<f64> {
    let moved = theta(z + m as f64 + data.modulus * n as f64, data)?;
    let predicted = theta_multiplier(z, m, n, data) * theta(z, data)?;
    Ok((moved - predicted).norm() / moved.norm().max(1.0))
}

fn odd_data(data: &EllipticData) -> Result<EllipticData> {
    data.with_characteristic((0.5, 0.5))
}

/// Reduces `d` modulo the lattice `Z + τZ` to the fundamental cell around 0.
fn reduce(d: Complex64, tau: Complex64) -> Complex64 {
    let n = (d.im / tau.im).round();
    let d = d - tau * n;
    d - d.re.round()
}

/// Genus-1 prime form `E(x, y) = θ₁(y - x) / θ₁'(0)`.
pub fn prime_form(x: Complex64, y: Complex64, data: &EllipticData) -> Result<Complex64> {
    let odd = odd_data(data)?;
    Ok(theta(y - x, &odd)? / theta_derivative(Complex64::new(0.0, 0.0), &odd)?)
}

pub fn szego_kernel_g1(x: Complex64, y: Complex64, data: &EllipticData) -> Result<Complex64> {
    let theta0 = theta(Complex64::new(0.0, 0.0), data)?;
    if theta0.norm() < SINGULAR_THETA {
        return Err(Error::SingularCharacteristic);
    }
    if reduce(y - x, data.modulus).norm() < COINCIDENCE_TOL {
        return Err(Error::CoincidentPoints);
    }
    Ok(theta(y - x, data)? / (theta0 * prime_form(x, y, data)?))
}

/// `S(x, y + m + nτ) = multiplier · S(x, y)`.
pub fn szego_multiplier(m: i64, n: i64, data: &EllipticData) -> Complex64 {
    let (a, b) = data.characteristic;
    let sign = if (m + n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    Complex64::from_polar(sign, 2.0 * PI * (a * m as f64 - b * n as f64))
}

pub fn szego_kernel_g0(x: Complex64, y: Complex64) -> Result<Complex64> {
    if (x - y).norm() < COINCIDENCE_TOL {
        return Err(Error::CoincidentPoints);
    }
    Ok((x - y).inv())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Genus0,
    Genus1(EllipticData),
}

impl Kernel {
    pub fn eval(&self, x: Complex64, y: Complex64) -> Result<Complex64> {
        match self {
            Kernel::Genus0 => szego_kernel_g0(x, y),
            Kernel::Genus1(data) => szego_kernel_g1(x, y, data),
        }
    }

    fn coincide(&self, x: Complex64, y: Complex64) -> bool {
        let d = match self {
            Kernel::Genus0 => x - y,
            Kernel::Genus1(data) => reduce(x - y, data.modulus),
        };
        d.norm() < COINCIDENCE_TOL
    }
}

fn check_distinct(points: &[Complex64], kernel: &Kernel) -> Result<()> {
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if kernel.coincide(points[i], points[j]) {
                return Err(Error::CoincidentPoints);
            }
        }
    }
    Ok(())
}

/// Indices sorting the points by `(re, im)` and the sign of that permutation.
fn canonical_order(points: &[Complex64]) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        (points[i].re, points[i].im)
            .partial_cmp(&(points[j].re, points[j].im))
            .expect("finite points")
    });
    let mut seen = vec![false; order.len()];
    let mut sign = 1.0;
    for start in 0..order.len() {
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = order[i];
            len += 1;
        }
        if len > 0 && len % 2 == 0 {
            sign = -sign;
        }
    }
    (order, sign)
}

/// `det[S(b_i, a_j)]`. Rows and columns are factored in a canonical point
/// order, so permuting the points changes the result by exactly the sign.
pub fn wick_determinant(a: &[Complex64], b: &[Complex64], kernel: &Kernel) -> Result<Complex64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} a-points and {} b-points", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|z| !z.is_finite()) {
        return Err(Error::InvalidInput("points must be finite".into()));
    }
    check_distinct(&[a, b].concat(), kernel)?;
    let n = a.len();
    let (cols, col_sign) = canonical_order(a);
    let (rows, row_sign) = canonical_order(b);
    let mut entries = Vec::with_capacity(n * n);
    for &i in &rows {
        for &j in &cols {
            entries.push(kernel.eval(b[i], a[j])?);
        }
    }
    Ok(Lu::factor(&CMat::from_row_slice(n, n, &entries)).det() * (row_sign * col_sign))
}

/// `Π_{i<j} (b_j - b_i)(a_i - a_j) / Π_{i,j} (b_i - a_j)`, the closed form of
/// the genus-0 determinant.
pub fn cauchy_determinant(a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} a-points and {} b-points", a.len(), b.len())));
    }
    check_distinct(&[a, b].concat(), &Kernel::Genus0)?;
    let n = a.len();
    let mut value = Complex64::new(1.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            value *= (b[j] - b[i]) * (a[i] - a[j]);
        }
    }
    for bi in b {
        for aj in a {
            value /= bi - aj;
        }
    }
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FayReport {
    pub determinant: Complex64,
    pub product: Complex64,
    pub residual: f64,
}

fn fay_report(determinant: Complex64, product: Complex64) -> FayReport {
    let scale = determinant.norm().max(product.norm());
    let residual = if scale > 0.0 { (determinant - product).norm() / scale } else { 0.0 };
    FayReport { determinant, product, residual }
}

/// Two-point determinant against
/// `θ[ξ](a₁+a₂-b₁-b₂)/θ[ξ](0) · E(b₁,b₂) E(a₂,a₁) / Π_{i,j} E(b_i,a_j)`.
pub fn fay_residual_g1(a1: Complex64, a2: Complex64, b1: Complex64, b2: Complex64, data: &EllipticData) -> Result<FayReport> {
    let kernel = Kernel::Genus1(*data);
    let determinant = wick_determinant(&[a1, a2], &[b1, b2], &kernel)?;
    let e = |x, y| prime_form(x, y, data);
    let theta0 = theta(Complex64::new(0.0, 0.0), data)?;
    let mut product = theta(a1 + a2 - b1 - b2, data)? / theta0 * e(b1, b2)? * e(a2, a1)?;
    for bi in [b1, b2] {
        for aj in [a1, a2] {
            product /= e(bi, aj)?;
        }
    }
    Ok(fay_report(determinant, product))
}

/// Genus-0 counterpart with `E(x, y) = x - y` and no theta factor.
pub fn fay_residual_g0(a1: Complex64, a2: Complex64, b1: Complex64, b2: Complex64) -> Result<FayReport> {
    let determinant = wick_determinant(&[a1, a2], &[b1, b2], &Kernel::Genus0)?;
    let mut product = (b1 - b2) * (a2 - a1);
    for bi in [b1, b2] {
        for aj in [a1, a2] {
            product /= bi - aj;
        }
    }
    Ok(fay_report(determinant, product))
}
