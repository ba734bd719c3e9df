//! Operator Schwarzian derivative of polynomial matrix curves, the commutation
//! gate on the first three derivatives, Möbius curves, the second-order
//! expansion of the cross-ratio along a curve and the composition rule.
//!
//! Curves are polynomials in `(s - center)` with [`AMatrix`] coefficients, so
//! derivatives are exact. Transcendental curves enter as Taylor truncations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::opalgebra::{AMatrix, Complex64, MatrixJson};

/// Default commutator tolerance, relative to the squared derivative scale.
pub const HOL3_TOL: f64 = 1e-8;

/// Commutator tolerance for Möbius coefficient quadruples.
pub const MOBIUS_COMMUTE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixCurve {
    coeffs: Vec<AMatrix>,
    center: Complex64,
}

fn falling(j: usize, k: usize) -> f64 {
    (0..k).map(|i| (j - i) as f64).product()
}

impl MatrixCurve {
    /// `z(s) = Σ_j C_j s^j`.
    pub fn new(coeffs: Vec<AMatrix>) -> Result<Self> {
        Self::with_center(coeffs, Complex64::new(0.0, 0.0))
    }

    /// `z(s) = Σ_j C_j (s - center)^j`.
    pub fn with_center(coeffs: Vec<AMatrix>, center: Complex64) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::InvalidInput("a curve needs at least one coefficient".into()))?;
        for c in &coeffs {
            if c.shape() != first.shape() {
                return Err(Error::DimensionMismatch("curve coefficients differ in shape".into()));
            }
            c.fiber_count_matches(first.m())?;
        }
        Ok(MatrixCurve { coeffs, center })
    }

    pub fn coeffs(&self) -> &[AMatrix] {
        &self.coeffs
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn m(&self) -> usize {
        self.coeffs[0].m()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].shape()
    }

    /// Coefficients of the `k`-th derivative, same center.
    pub fn derivative_coeffs(&self, k: usize) -> Vec<AMatrix> {
        if k > self.degree() {
            let (r, c) = self.shape();
            return vec![AMatrix::zeros(self.m(), r, c)];
        }
        (k..self.coeffs.len())
            .map(|j| self.coeffs[j].scale(Complex64::new(falling(j, k), 0.0)))
            .collect()
    }

    /// `z^{(k)}(s)` by Horner's rule.
    pub fn derivative(&self, k: usize, s: Complex64) -> AMatrix {
        let u = s - self.center;
        let coeffs = self.derivative_coeffs(k);
        let mut acc = coeffs.last().expect("nonempty").clone();
        for c in coeffs.iter().rev().skip(1) {
            acc = acc.scale(u).add(c).expect("shapes agree");
        }
        acc
    }

    pub fn eval(&self, s: Complex64) -> AMatrix {
        self.derivative(0, s)
    }

    /// `z(x) - z(y)` from `u^j - v^j = (u - v) Σ_k u^k v^{j-1-k}`, without
    /// cancellation between nearby values.
    pub fn difference(&self, x: Complex64, y: Complex64) -> AMatrix {
        let (u, v) = (x - self.center, y - self.center);
        let (r, c) = self.shape();
        let mut acc = AMatrix::zeros(self.m(), r, c);
        let mut h = Complex64::new(1.0, 0.0);
        let mut v_pow = Complex64::new(1.0, 0.0);
        for cj in &self.coeffs[1..] {
            acc = acc.add(&cj.scale(h)).expect("shapes agree");
            v_pow *= v;
            h = u * h + v_pow;
        }
        acc.scale(u - v)
    }
}

/// Largest pairwise commutator among `z', z'', z'''`, relative to
/// `max(1, max ‖z^{(k)}‖²)`.
fn derivative_commutator(d: &[AMatrix; 3]) -> Result<f64> {
    let scale = d.iter().map(|x| x.norm_inf()).fold(1.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            worst = worst.max(d[i].commutator(&d[j])?.norm_inf());
        }
    }
    Ok(worst / (scale * scale))
}

fn derivatives_at(curve: &MatrixCurve, s: Complex64) -> [AMatrix; 3] {
    [curve.derivative(1, s), curve.derivative(2, s), curve.derivative(3, s)]
}

pub fn hol3_check(curve: &MatrixCurve, s: Complex64, tol: f64) -> bool {
    if !curve.coeffs[0].is_square() {
        return false;
    }
    let d = derivatives_at(curve, s);
    match (derivative_commutator(&d), d[0].is_singular()) {
        (Ok(c), Ok(false)) => c <= tol,
        _ => false,
    }
}

/// `(z')⁻¹ z''' - (3/2) ((z')⁻¹ z'')²` from the three derivatives.
fn schwarzian_formula(d: &[AMatrix; 3]) -> Result<AMatrix> {
    if !d[0].is_square() {
        return Err(Error::DimensionMismatch("Schwarzian needs square values".into()));
    }
    if d[0].is_singular()? {
        return Err(Error::NonInvertibleDerivative);
    }
    let commutator = derivative_commutator(d)?;
    if commutator > HOL3_TOL {
        return Err(Error::Hol3Violation(commutator));
    }
    let a = d[0].solve(&d[2])?;
    let b = d[0].solve(&d[1])?;
    a.sub(&b.matmul(&b)?.scale(Complex64::new(1.5, 0.0)))
}

pub fn schwarzian_at(curve: &MatrixCurve, s: Complex64) -> Result<AMatrix> {
    schwarzian_formula(&derivatives_at(curve, s))
}

fn max_commutator(xs: &[&AMatrix]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            worst = worst.max(xs[i].commutator(xs[j])?.norm_inf());
        }
    }
    Ok(worst)
}

/// Taylor polynomial of degree `degree` of `s -> (As + B)(Cs + D)⁻¹` about
/// `center`.
pub fn mobius_curve_at(
    a: &AMatrix,
    b: &AMatrix,
    c: &AMatrix,
    d: &AMatrix,
    degree: usize,
    center: Complex64,
) -> Result<MatrixCurve> {
    for x in [b, c, d] {
        if x.shape() != a.shape() {
            return Err(Error::DimensionMismatch("Möbius coefficients differ in shape".into()));
        }
        x.fiber_count_matches(a.m())?;
    }
    if !a.is_square() {
        return Err(Error::DimensionMismatch("Möbius coefficients must be square".into()));
    }
    let scale = [a, b, c, d].iter().map(|x| x.norm_inf()).fold(1.0, f64::max);
    if max_commutator(&[a, b, c, d])? > MOBIUS_COMMUTE_TOL * scale * scale {
        return Err(Error::NonCommutingCoefficients);
    }
    // about the center: (A u + B')(C u + D')⁻¹ with B' = A s₀ + B, D' = C s₀ + D
    let b0 = a.scale(center).add(b)?;
    let d0 = c.scale(center).add(d)?;
    if d0.is_singular()? {
        return Err(Error::SingularDenominator);
    }
    let d_inv = d0.inv()?;
    let ratio = c.matmul(&d_inv)?.neg();
    // E_k = D'⁻¹ (-C D'⁻¹)^k; z_k = B' E_k + A E_{k-1}
    let mut e = vec![d_inv];
    for k in 1..=degree {
        let next = e[k - 1].matmul(&ratio)?;
        e.push(next);
    }
    let mut coeffs = Vec::with_capacity(degree + 1);
    for k in 0..=degree {
        let mut z = b0.matmul(&e[k])?;
        if k > 0 {
            z = z.add(&a.matmul(&e[k - 1])?)?;
        }
        coeffs.push(z);
    }
    MatrixCurve::with_center(coeffs, center)
}

pub fn mobius_curve(a: &AMatrix, b: &AMatrix, c: &AMatrix, d: &AMatrix, degree: usize) -> Result<MatrixCurve> {
    mobius_curve_at(a, b, c, d, degree, Complex64::new(0.0, 0.0))
}

/// Which operator cross-ratio is compared with its scalar counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotOrder {
    /// `cross(f(w+ta), f(w+td); f(w+tc), f(w+tb)) · cross(a, d; c, b)⁻¹`,
    /// whose `t²` coefficient is `(a-b)(c-d) Schw / 6`.
    Classical,
    /// `cross(f(w+ta), f(w+tb); f(w+tc), f(w+td)) · cross(a, b; c, d)⁻¹`,
    /// whose `t²` coefficient is `(a-d)(c-b) Schw / 6`.
    Literal,
}

impl SlotOrder {
    fn arrange<T: Copy>(self, a: T, b: T, c: T, d: T) -> [T; 4] {
        match self {
            SlotOrder::Classical => [a, d, c, b],
            SlotOrder::Literal => [a, b, c, d],
        }
    }

    fn reference_factor(self, a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
        match self {
            SlotOrder::Classical => (a - b) * (c - d) / 6.0,
            SlotOrder::Literal => (a - d) * (c - b) / 6.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub fitted: MatrixJson,
    pub reference: MatrixJson,
    /// Largest entry modulus of `fitted - reference`.
    pub gap: f64,
    /// Observed order of `‖L(t) - I‖` between the first two step sizes;
    /// `None` when `L(t) - I` is at rounding level.
    pub order_estimate: Option<f64>,
    #[serde(skip)]
    pub fitted_matrix: AMatrix,
    #[serde(skip)]
    pub reference_matrix: AMatrix,
}

/// `(a-c)(a-b)⁻¹(b-d)(c-d)⁻¹` from the four differences.
fn cross_from_differences(ac: &AMatrix, ab: &AMatrix, bd: &AMatrix, cd: &AMatrix) -> Result<AMatrix> {
    if ab.is_singular()? {
        return Err(Error::DegeneratePair("a - b"));
    }
    if cd.is_singular()? {
        return Err(Error::DegeneratePair("c - d"));
    }
    ac.matmul(&ab.inv()?)?.matmul(bd)?.matmul(&cd.inv()?)
}

fn scalar_cross(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    (a - c) / (a - b) * (b - d) / (c - d)
}

/// Weights `w_i` with `Σ w_i p(t_i) = p(0)` for polynomials of degree below
/// the number of nodes.
fn extrapolation_weights(ts: &[f64]) -> Vec<f64> {
    (0..ts.len())
        .map(|i| {
            ts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &tj)| tj / (tj - ts[i]))
                .product()
        })
        .collect()
}

/// `L(t) - I` is treated as rounding noise below this size.
const EXPANSION_NOISE: f64 = 1e-12;

pub fn expansion_check_ordered(
    curve: &MatrixCurve,
    w: Complex64,
    [a, b, c, d]: [Complex64; 4],
    t_list: &[f64],
    order: SlotOrder,
) -> Result<ExpansionReport> {
    let pts = [a, b, c, d];
    for i in 0..4 {
        for j in i + 1..4 {
            if pts[i] == pts[j] {
                return Err(Error::InvalidInput("a, b, c, d must be distinct".into()));
            }
        }
    }
    if t_list.is_empty() || t_list.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput("t_list needs positive finite steps".into()));
    }
    for i in 0..t_list.len() {
        if t_list[i + 1..].contains(&t_list[i]) {
            return Err(Error::InvalidInput("t_list steps must be distinct".into()));
        }
    }
    let schw = schwarzian_at(curve, w)?;
    let [p0, p1, p2, p3] = order.arrange(a, b, c, d);
    let k_inv = scalar_cross(p0, p1, p2, p3).inv();
    let (n, _) = curve.shape();
    let identity = AMatrix::identity(curve.m(), n);

    let mut quotients = Vec::with_capacity(t_list.len());
    let mut defects = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let diff = |x: Complex64, y: Complex64| curve.difference(w + x * t, w + y * t);
        let l = cross_from_differences(&diff(p0, p2), &diff(p0, p1), &diff(p1, p3), &diff(p2, p3))?.scale(k_inv);
        let defect = l.sub(&identity)?;
        defects.push(defect.norm_inf());
        quotients.push(defect.scale(Complex64::new(1.0 / (t * t), 0.0)));
    }
    let weights = extrapolation_weights(t_list);
    let mut fitted = AMatrix::zeros(curve.m(), n, n);
    for (q, wgt) in quotients.iter().zip(&weights) {
        fitted = fitted.add(&q.scale(Complex64::new(*wgt, 0.0)))?;
    }
    let reference = schw.scale(order.reference_factor(a, b, c, d));
    let gap = fitted.sub(&reference)?.max_abs();
    let order_estimate = if t_list.len() >= 2 && defects[0] > EXPANSION_NOISE && defects[1] > EXPANSION_NOISE {
        Some((defects[0] / defects[1]).ln() / (t_list[0] / t_list[1]).ln())
    } else {
        None
    };
    Ok(ExpansionReport {
        fitted: MatrixJson::from(&fitted),
        reference: MatrixJson::from(&reference),
        gap,
        order_estimate,
        fitted_matrix: fitted,
        reference_matrix: reference,
    })
}

/// Fits the `t²` coefficient of the cross-ratio along the curve and compares
/// it with `(a-b)(c-d) Schw(w) / 6`.
pub fn expansion_check(
    curve: &MatrixCurve,
    w: Complex64,
    abcd: [Complex64; 4],
    t_list: &[f64],
) -> Result<ExpansionReport> {
    expansion_check_ordered(curve, w, abcd, t_list, SlotOrder::Classical)
}

fn poly_mul(x: &[AMatrix], y: &[AMatrix]) -> Result<Vec<AMatrix>> {
    let (r, c) = x[0].shape();
    let mut out = vec![AMatrix::zeros(x[0].m(), r, c); x.len() + y.len() - 1];
    for (i, xi) in x.iter().enumerate() {
        for (j, yj) in y.iter().enumerate() {
            out[i + j] = out[i + j].add(&xi.matmul(yj)?)?;
        }
    }
    Ok(out)
}

/// `h ∘ f` by exact polynomial substitution; the result is centered where
/// `f` is. Meaningful when all values commute.
pub fn compose(h: &MatrixCurve, f: &MatrixCurve) -> Result<MatrixCurve> {
    if h.shape() != f.shape() || !h.coeffs[0].is_square() {
        return Err(Error::DimensionMismatch("composition needs square curves of one shape".into()));
    }
    h.coeffs[0].fiber_count_matches(f.m())?;
    let (n, _) = f.shape();
    let m = f.m();
    let mut shifted = f.coeffs.clone();
    shifted[0] = shifted[0].sub(&AMatrix::identity(m, n).scale(h.center))?;
    let mut power = vec![AMatrix::identity(m, n)];
    let mut out = vec![AMatrix::zeros(m, n, n); h.degree() * f.degree() + 1];
    for (j, hj) in h.coeffs.iter().enumerate() {
        if j > 0 {
            power = poly_mul(&power, &shifted)?;
        }
        for (k, pk) in power.iter().enumerate() {
            out[k] = out[k].add(&hj.matmul(pk)?)?;
        }
    }
    MatrixCurve::with_center(out, f.center)
}

/// `Σ_j C_j (X - c)^j` for a matrix argument `X`.
fn eval_at_matrix(coeffs: &[AMatrix], center: Complex64, x: &AMatrix) -> Result<AMatrix> {
    let (n, _) = x.shape();
    let u = x.sub(&AMatrix::identity(x.m(), n).scale(center))?;
    let mut acc = coeffs.last().expect("nonempty").clone();
    for c in coeffs.iter().rev().skip(1) {
        acc = acc.matmul(&u)?.add(c)?;
    }
    Ok(acc)
}

/// `‖Schw(h∘f) - ((Schw h)∘f · (f')² + Schw f)‖∞` at `s`.
pub fn composition_residual(f: &MatrixCurve, h: &MatrixCurve, s: Complex64) -> Result<f64> {
    let hf = compose(h, f)?;
    let lhs = schwarzian_at(&hf, s)?;
    let schw_f = schwarzian_at(f, s)?;
    let x = f.eval(s);
    let hd = [
        eval_at_matrix(&h.derivative_coeffs(1), h.center, &x)?,
        eval_at_matrix(&h.derivative_coeffs(2), h.center, &x)?,
        eval_at_matrix(&h.derivative_coeffs(3), h.center, &x)?,
    ];
    let schw_h = schwarzian_formula(&hd)?;
    let fp = f.derivative(1, s);
    let rhs = schw_h.matmul(&fp.matmul(&fp)?)?.add(&schw_f)?;
    Ok(lhs.sub(&rhs)?.norm_inf())
}
