//! Formal pseudodifferential symbols `Σ_n a_n(t) ∂^n`, `∂ = ∂/∂t_1`, with
//! polynomial coefficients, truncated below order `-M`.
//!
//! Besides the per-coefficient validity degree, each symbol records the lowest
//! order from which its coefficients are exact; orders below it may be missing
//! contributions of terms that were truncated earlier.

use std::sync::Arc;

use serde::Serialize;

use super::poly::{Basis, Poly};
use crate::error::{Error, Result};
use crate::opalgebra::{AMatrix, Complex64};

/// `exact_from` of a symbol with no truncated terms.
pub const EXACT_EVERYWHERE: i64 = i64::MIN;

/// Truncation window: degree cap `D`, negative depth `M`, top order `Kmax`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Window {
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "M")]
    pub depth: usize,
    #[serde(rename = "Kmax")]
    pub kmax: usize,
}

impl Default for Window {
    fn default() -> Self {
        Window { d: 6, depth: 6, kmax: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct PsdoSymbol {
    window: Window,
    basis: Arc<Basis>,
    m: usize,
    n: usize,
    /// Coefficients of orders `-M ..= hi`.
    coeffs: Vec<Poly>,
    exact_from: i64,
    dropped_tail: f64,
}

/// `C(n, j)` for integer `n` of either sign.
pub fn binomial(n: i64, j: usize) -> f64 {
    let mut c: i128 = 1;
    for i in 0..j as i128 {
        c = c * (n as i128 - i) / (i + 1);
    }
    c as f64
}

impl PsdoSymbol {
    pub fn zero(basis: &Arc<Basis>, window: Window, m: usize, n: usize) -> Self {
        PsdoSymbol {
            window,
            basis: basis.clone(),
            m,
            n,
            coeffs: vec![Poly::zero(basis, m, n); window.depth + 1],
            exact_from: EXACT_EVERYWHERE,
            dropped_tail: 0.0,
        }
    }

    /// `Σ p_n ∂^n` over the given terms; repeated orders add up.
    pub fn from_terms(basis: &Arc<Basis>, window: Window, m: usize, n: usize, terms: Vec<(i64, Poly)>) -> Result<Self> {
        let mut out = Self::zero(basis, window, m, n);
        for (order, p) in terms {
            if p.m() != m || p.size() != n {
                return Err(Error::DimensionMismatch(format!("term of order {order} has the wrong shape")));
            }
            out.add_at(order, &p)?;
        }
        Ok(out)
    }

    /// `∂^k` with identity coefficient.
    pub fn partial(basis: &Arc<Basis>, window: Window, m: usize, n: usize, k: i64) -> Result<Self> {
        Self::from_terms(basis, window, m, n, vec![(k, Poly::constant(basis, AMatrix::identity(m, n)))])
    }

    pub fn identity(basis: &Arc<Basis>, window: Window, m: usize, n: usize) -> Self {
        Self::partial(basis, window, m, n, 0).expect("order 0 lies in the window")
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> i64 {
        -(self.window.depth as i64)
    }

    pub fn hi(&self) -> i64 {
        self.lo() + self.coeffs.len() as i64 - 1
    }

    /// Lowest order whose coefficient is exact.
    pub fn exact_from(&self) -> i64 {
        self.exact_from
    }

    /// Marks orders below `order` as possibly incomplete.
    pub fn truncated_below(mut self, order: i64) -> Self {
        self.exact_from = self.exact_from.max(order);
        self
    }

    /// Norm of the first dropped order in the composition that produced this
    /// symbol.
    pub fn dropped_tail(&self) -> f64 {
        self.dropped_tail
    }

    pub fn coefficient(&self, order: i64) -> Option<&Poly> {
        if order < self.lo() || order > self.hi() {
            return None;
        }
        Some(&self.coeffs[(order - self.lo()) as usize])
    }

    fn slot(&mut self, order: i64) -> Result<&mut Poly> {
        if order < self.lo() {
            return Err(Error::InvalidInput(format!("order {order} below the window floor {}", self.lo())));
        }
        while order > self.hi() {
            self.coeffs.push(Poly::zero(&self.basis, self.m, self.n));
        }
        let lo = self.lo();
        Ok(&mut self.coeffs[(order - lo) as usize])
    }

    fn add_at(&mut self, order: i64, p: &Poly) -> Result<()> {
        let slot = self.slot(order)?;
        *slot = slot.add(p)?;
        Ok(())
    }

    /// Orders with a nonzero coefficient, ascending.
    pub fn support(&self) -> Vec<i64> {
        (self.lo()..=self.hi())
            .filter(|&o| !self.coefficient(o).expect("in range").is_zero())
            .collect()
    }

    /// Highest order with a nonzero coefficient.
    pub fn top(&self) -> Option<i64> {
        self.support().last().copied()
    }

    pub fn bottom(&self) -> Option<i64> {
        self.support().first().copied()
    }

    fn compatible(&self, other: &PsdoSymbol) -> Result<()> {
        if self.window != other.window || self.m != other.m || self.n != other.n {
            return Err(Error::DimensionMismatch("symbols with different windows or shapes".into()));
        }
        if self.basis.times() != other.basis.times() || self.basis.degree_cap() != other.basis.degree_cap() {
            return Err(Error::DimensionMismatch("symbols over different polynomial bases".into()));
        }
        Ok(())
    }

    fn zip(&self, other: &PsdoSymbol, f: impl Fn(&Poly, &Poly) -> Result<Poly>) -> Result<Self> {
        self.compatible(other)?;
        let mut out = Self::zero(&self.basis, self.window, self.m, self.n);
        let zero = Poly::zero(&self.basis, self.m, self.n);
        for order in self.lo()..=self.hi().max(other.hi()) {
            let a = self.coefficient(order).unwrap_or(&zero);
            let b = other.coefficient(order).unwrap_or(&zero);
            *out.slot(order)? = f(a, b)?;
        }
        out.exact_from = self.exact_from.max(other.exact_from);
        Ok(out)
    }

    pub fn add(&self, other: &PsdoSymbol) -> Result<Self> {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &PsdoSymbol) -> Result<Self> {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs = self.coeffs.iter().map(|p| p.scale(c)).collect();
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// Coefficientwise `∂/∂t_{k+1}` (zero-based time index).
    pub fn derivative_t(&self, k: usize) -> Result<Self> {
        let mut out = self.clone();
        out.coeffs = self.coeffs.iter().map(|p| p.derivative(k)).collect::<Result<_>>()?;
        Ok(out)
    }

    fn filtered(&self, keep: impl Fn(i64) -> bool) -> Self {
        let mut out = self.clone();
        for order in self.lo()..=self.hi() {
            if !keep(order) {
                out.coeffs[(order - self.lo()) as usize] = Poly::zero(&self.basis, self.m, self.n);
            }
        }
        out.dropped_tail = 0.0;
        out
    }

    /// Differential part, orders `>= 0`.
    pub fn plus_part(&self) -> Self {
        let mut out = self.filtered(|o| o >= 0);
        if self.exact_from <= 0 {
            out.exact_from = EXACT_EVERYWHERE;
        }
        out
    }

    /// Integral part, orders `< 0`.
    pub fn minus_part(&self) -> Self {
        self.filtered(|o| o < 0)
    }

    /// Per-fiber norms over the exact orders and the valid monomials, and the
    /// number of order/coefficient slots inspected.
    pub fn window_norms(&self) -> (Vec<f64>, usize) {
        self.window_norms_like(self)
    }

    /// As [`window_norms`](Self::window_norms), over the window of `reference`.
    pub fn window_norms_like(&self, reference: &PsdoSymbol) -> (Vec<f64>, usize) {
        let mut norms = vec![0.0f64; self.m];
        let mut slots = 0;
        let start = reference.exact_from.max(reference.lo());
        for order in start..=self.hi().max(reference.hi()) {
            let valid = match reference.coefficient(order) {
                Some(p) => p.valid(),
                None => super::poly::COMPLETE,
            };
            if valid < 0 {
                continue;
            }
            let Some(p) = self.coefficient(order) else { continue };
            for (k, v) in p.clone().with_valid(valid).window_norms().into_iter().enumerate() {
                norms[k] = norms[k].max(v);
            }
            slots += (0..p.basis().len()).filter(|&i| p.basis().total_degree(i) as i64 <= valid).count();
        }
        (norms, slots)
    }
}

/// Truncated composition `x ∘ y` by the Leibniz rule
/// `∂^n ∘ a = Σ_j C(n, j) (∂_1^j a) ∂^{n-j}`.
pub fn psdo_mul(x: &PsdoSymbol, y: &PsdoSymbol) -> Result<PsdoSymbol> {
    x.compatible(y)?;
    let lo = x.lo();
    let mut out = PsdoSymbol::zero(&x.basis, x.window, x.m, x.n);
    let mut tail = Poly::zero(&x.basis, x.m, x.n);
    let (xs, ys) = (x.support(), y.support());
    if xs.is_empty() || ys.is_empty() {
        out.exact_from = x.exact_from.max(y.exact_from);
        return Ok(out);
    }
    let mut derivs: Vec<Vec<Poly>> = ys.iter().map(|&p| vec![y.coefficient(p).expect("support").clone()]).collect();
    for &n in &xs {
        let xn = x.coefficient(n).expect("support");
        for (slot, &p) in ys.iter().enumerate() {
            let reach = n + p - lo + 1;
            let jmax = if n >= 0 { n.min(reach) } else { reach };
            if jmax < 0 {
                continue;
            }
            for j in 0..=jmax as usize {
                while derivs[slot].len() <= j {
                    let next = derivs[slot].last().expect("nonempty").derivative(0)?;
                    derivs[slot].push(next);
                }
                let dy = &derivs[slot][j];
                if dy.is_zero() && dy.valid() == super::poly::COMPLETE {
                    break;
                }
                let c = binomial(n, j);
                if c == 0.0 {
                    continue;
                }
                let term = xn.mul(dy)?.scale(Complex64::new(c, 0.0));
                let r = n + p - j as i64;
                if r < lo {
                    tail = tail.add(&term)?;
                } else {
                    out.add_at(r, &term)?;
                }
            }
        }
    }
    let (tx, ty) = (*xs.last().unwrap(), *ys.last().unwrap());
    let truncated = xs[0] < 0 || xs[0] + ys[0] < lo;
    let shifted = |e: i64, t: i64| if e == EXACT_EVERYWHERE { EXACT_EVERYWHERE } else { e + t };
    out.exact_from = [if truncated { lo } else { EXACT_EVERYWHERE }, shifted(x.exact_from, ty), shifted(y.exact_from, tx)]
        .into_iter()
        .max()
        .expect("three candidates");
    out.dropped_tail = tail.norms().into_iter().fold(0.0, f64::max);
    Ok(out)
}

pub fn commutator(x: &PsdoSymbol, y: &PsdoSymbol) -> Result<PsdoSymbol> {
    psdo_mul(x, y)?.sub(&psdo_mul(y, x)?)
}

/// `x^k`, `k >= 0`.
pub fn psdo_pow(x: &PsdoSymbol, k: usize) -> Result<PsdoSymbol> {
    let mut acc = PsdoSymbol::identity(&x.basis, x.window, x.m, x.n);
    for _ in 0..k {
        acc = psdo_mul(&acc, x)?;
    }
    Ok(acc)
}

pub fn plus_part(x: &PsdoSymbol) -> PsdoSymbol {
    x.plus_part()
}

pub fn minus_part(x: &PsdoSymbol) -> PsdoSymbol {
    x.minus_part()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalgebra::{c64, AValue};

    fn scalar(x: f64) -> AMatrix {
        AMatrix::from_avalue(&AValue::splat(1, c64(x, 0.0)))
    }

    fn poly(basis: &Arc<Basis>, terms: &[(&[u8], f64)]) -> Poly {
        let mut p = Poly::zero(basis, 1, 1);
        for (e, c) in terms {
            p.set_coefficient(e, scalar(*c)).unwrap();
        }
        p
    }

    #[test]
    fn generalized_binomials() {
        assert_eq!(binomial(3, 2), 3.0);
        assert_eq!(binomial(2, 3), 0.0);
        assert_eq!(binomial(-1, 4), 1.0);
        assert_eq!(binomial(-1, 3), -1.0);
        assert_eq!(binomial(-2, 3), -4.0);
    }

    #[test]
    fn partial_then_function() {
        let b = Basis::new(2, 4);
        let w = Window { d: 4, depth: 4, kmax: 3 };
        let a = poly(&b, &[(&[2, 0], 1.0), (&[1, 1], 3.0)]);
        let d = PsdoSymbol::partial(&b, w, 1, 1, 1).unwrap();
        let av = PsdoSymbol::from_terms(&b, w, 1, 1, vec![(0, a.clone())]).unwrap();
        let prod = psdo_mul(&d, &av).unwrap();
        assert_eq!(prod.support(), vec![0, 1]);
        assert_eq!(prod.coefficient(1).unwrap().coeffs(), a.coeffs());
        assert_eq!(prod.coefficient(0).unwrap().coeffs(), a.derivative(0).unwrap().coeffs());
        assert_eq!(prod.exact_from(), EXACT_EVERYWHERE);
    }

    #[test]
    fn inverse_partial_then_function() {
        let b = Basis::new(1, 8);
        let w = Window { d: 8, depth: 5, kmax: 3 };
        let a = poly(&b, &[(&[4], 1.0), (&[1], 2.0)]);
        let inv = PsdoSymbol::partial(&b, w, 1, 1, -1).unwrap();
        let av = PsdoSymbol::from_terms(&b, w, 1, 1, vec![(0, a.clone())]).unwrap();
        let prod = psdo_mul(&inv, &av).unwrap();
        let mut dj = a.clone();
        for j in 0..5 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let expect = dj.scale(c64(sign, 0.0));
            assert_eq!(prod.coefficient(-1 - j).unwrap().coeffs(), expect.coeffs(), "order {}", -1 - j);
            dj = dj.derivative(0).unwrap();
        }
        assert_eq!(prod.exact_from(), -5);
        assert_eq!(prod.dropped_tail(), 0.0);

        let t7 = poly(&b, &[(&[7], 1.0)]);
        let p = psdo_mul(&inv, &PsdoSymbol::from_terms(&b, w, 1, 1, vec![(0, t7)]).unwrap()).unwrap();
        // first dropped order -6 carries -(7!/2!) t²
        assert_eq!(p.dropped_tail(), 2520.0);
    }

    #[test]
    fn split_and_reassemble() {
        let b = Basis::new(1, 3);
        let w = Window { d: 3, depth: 3, kmax: 2 };
        let x = PsdoSymbol::from_terms(
            &b,
            w,
            1,
            1,
            vec![(2, poly(&b, &[(&[0], 1.0)])), (0, poly(&b, &[(&[1], 2.0)])), (-2, poly(&b, &[(&[2], -1.0)]))],
        )
        .unwrap();
        let back = plus_part(&x).add(&minus_part(&x)).unwrap();
        for o in x.lo()..=x.hi() {
            assert_eq!(back.coefficient(o).unwrap().coeffs(), x.coefficient(o).unwrap().coeffs());
        }
        let d = PsdoSymbol::partial(&b, w, 1, 1, 2).unwrap();
        assert_eq!(plus_part(&d).support(), vec![2]);
        assert!(plus_part(&PsdoSymbol::partial(&b, w, 1, 1, -1).unwrap()).support().is_empty());
    }
}
