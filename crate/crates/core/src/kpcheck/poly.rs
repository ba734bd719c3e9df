//! Truncated multivariate polynomials in the times `t_1..t_T` with
//! [`AMatrix`] coefficients.
//!
//! Every polynomial carries a validity degree: its coefficients agree with the
//! quantity it represents for all monomials of total degree up to `valid`.
//! Products keep the smaller validity and `∂/∂t_k` lowers it by one, so
//! residuals can be restricted to the trustworthy part.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::opalgebra::{AMatrix, Complex64};

/// Validity of a polynomial that has no truncated terms at all.
pub const COMPLETE: i64 = i64::MAX;

/// Graded monomial basis of total degree `<= d` in `t` variables, with product
/// and derivative tables.
#[derive(Debug)]
pub struct Basis {
    t: usize,
    d: usize,
    exps: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    product: Vec<Vec<Option<usize>>>,
    derivative: Vec<Vec<Option<(f64, usize)>>>,
}

impl Basis {
    pub fn new(t: usize, d: usize) -> Arc<Self> {
        assert!(t >= 1 && d < 256, "need at least one time and degree below 256");
        let mut exps: Vec<Vec<u8>> = Vec::new();
        for degree in 0..=d {
            let mut current = vec![0u8; t];
            compositions(degree, 0, &mut current, &mut exps);
        }
        let index: HashMap<Vec<u8>, usize> = exps.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        let product = exps
            .iter()
            .map(|a| {
                exps.iter()
                    .map(|b| {
                        let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                        index.get(&sum).copied()
                    })
                    .collect()
            })
            .collect();
        let derivative = exps
            .iter()
            .map(|e| {
                (0..t)
                    .map(|k| {
                        if e[k] == 0 {
                            return None;
                        }
                        let mut lowered = e.clone();
                        lowered[k] -= 1;
                        Some((e[k] as f64, index[&lowered]))
                    })
                    .collect()
            })
            .collect();
        Arc::new(Basis { t, d, exps, index, product, derivative })
    }

    pub fn times(&self) -> usize {
        self.t
    }

    pub fn degree_cap(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).copied()
    }

    pub fn total_degree(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&e| e as usize).sum()
    }
}

/// All exponent vectors of the given total degree, lexicographically
/// descending in the first variable.
fn compositions(remaining: usize, pos: usize, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining as u8;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e as u8;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

#[derive(Clone, Debug)]
pub struct Poly {
    basis: Arc<Basis>,
    coeffs: Vec<AMatrix>,
    valid: i64,
}

fn same_basis(a: &Basis, b: &Basis) -> Result<()> {
    if a.t != b.t || a.d != b.d {
        return Err(Error::DimensionMismatch(format!(
            "polynomials over (T={}, D={}) and (T={}, D={})",
            a.t, a.d, b.t, b.d
        )));
    }
    Ok(())
}

impl Poly {
    pub fn zero(basis: &Arc<Basis>, m: usize, n: usize) -> Self {
        Poly { basis: basis.clone(), coeffs: vec![AMatrix::zeros(m, n, n); basis.len()], valid: COMPLETE }
    }

    pub fn constant(basis: &Arc<Basis>, c: AMatrix) -> Self {
        let mut p = Self::zero(basis, c.m(), c.rows());
        p.coeffs[0] = c;
        p
    }

    /// From explicit coefficients in basis order, valid to the given degree.
    pub fn from_coeffs(basis: &Arc<Basis>, coeffs: Vec<AMatrix>, valid: i64) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for {} monomials", coeffs.len(), basis.len())));
        }
        let first = &coeffs[0];
        if !first.is_square() {
            return Err(Error::NotSquare { rows: first.rows(), cols: first.cols() });
        }
        for c in &coeffs {
            if c.shape() != first.shape() {
                return Err(Error::DimensionMismatch("polynomial coefficients differ in shape".into()));
            }
            c.fiber_count_matches(first.m())?;
        }
        Ok(Poly { basis: basis.clone(), coeffs, valid })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[AMatrix] {
        &self.coeffs
    }

    pub fn coefficient(&self, exps: &[u8]) -> Option<&AMatrix> {
        self.basis.index_of(exps).map(|i| &self.coeffs[i])
    }

    pub fn set_coefficient(&mut self, exps: &[u8], c: AMatrix) -> Result<()> {
        let i = self
            .basis
            .index_of(exps)
            .ok_or_else(|| Error::InvalidInput(format!("monomial {exps:?} outside the degree cap")))?;
        if c.shape() != self.coeffs[i].shape() {
            return Err(Error::DimensionMismatch("coefficient shape".into()));
        }
        self.coeffs[i] = c;
        Ok(())
    }

    pub fn valid(&self) -> i64 {
        self.valid
    }

    pub fn with_valid(mut self, valid: i64) -> Self {
        self.valid = valid;
        self
    }

    pub fn m(&self) -> usize {
        self.coeffs[0].m()
    }

    pub fn size(&self) -> usize {
        self.coeffs[0].rows()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.max_abs() == 0.0)
    }

    /// Highest total degree with a nonzero coefficient, `None` for zero.
    pub fn degree(&self) -> Option<usize> {
        (0..self.coeffs.len())
            .rev()
            .find(|&i| self.coeffs[i].max_abs() != 0.0)
            .map(|i| self.basis.total_degree(i))
    }

    fn zip(&self, other: &Poly, f: impl Fn(&AMatrix, &AMatrix) -> Result<AMatrix>) -> Result<Poly> {
        same_basis(&self.basis, &other.basis)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| f(a, b)).collect::<Result<_>>()?;
        Ok(Poly { basis: self.basis.clone(), coeffs, valid: self.valid.min(other.valid) })
    }

    pub fn add(&self, other: &Poly) -> Result<Poly> {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Poly) -> Result<Poly> {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, c: Complex64) -> Poly {
        Poly { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|x| x.scale(c)).collect(), valid: self.valid }
    }

    pub fn neg(&self) -> Poly {
        Poly { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|x| x.neg()).collect(), valid: self.valid }
    }

    /// Product truncated at the degree cap; coefficients multiply in the order
    /// `self * other`.
    pub fn mul(&self, other: &Poly) -> Result<Poly> {
        same_basis(&self.basis, &other.basis)?;
        let mut coeffs = vec![AMatrix::zeros(self.m(), self.size(), self.size()); self.basis.len()];
        let nonzero = |p: &Poly| -> Vec<usize> { (0..p.coeffs.len()).filter(|&i| p.coeffs[i].max_abs() != 0.0).collect() };
        let (lhs, rhs) = (nonzero(self), nonzero(other));
        let mut dropped = false;
        for &i in &lhs {
            for &j in &rhs {
                match self.basis.product[i][j] {
                    Some(k) => coeffs[k] = coeffs[k].add(&self.coeffs[i].matmul(&other.coeffs[j])?)?,
                    None => dropped = true,
                }
            }
        }
        let mut valid = self.valid.min(other.valid);
        if dropped {
            valid = valid.min(self.basis.d as i64);
        }
        Ok(Poly { basis: self.basis.clone(), coeffs, valid })
    }

    /// `∂/∂t_{k+1}` (zero-based variable index).
    pub fn derivative(&self, k: usize) -> Result<Poly> {
        if k >= self.basis.t {
            return Err(Error::InvalidInput(format!("no time t{} in a {}-time basis", k + 1, self.basis.t)));
        }
        let mut coeffs = vec![AMatrix::zeros(self.m(), self.size(), self.size()); self.basis.len()];
        for (i, c) in self.coeffs.iter().enumerate() {
            if let Some((factor, lowered)) = self.basis.derivative[i][k] {
                coeffs[lowered] = c.scale(Complex64::new(factor, 0.0));
            }
        }
        let valid = if self.valid == COMPLETE { COMPLETE } else { self.valid - 1 };
        Ok(Poly { basis: self.basis.clone(), coeffs, valid })
    }

    /// Per-fiber largest entry modulus over the monomials inside the validity
    /// window.
    pub fn window_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.m()];
        for (i, c) in self.coeffs.iter().enumerate() {
            if (self.basis.total_degree(i) as i64) > self.valid {
                continue;
            }
            for (k, f) in c.fibers().iter().enumerate() {
                out[k] = f.iter().map(|z| z.norm()).fold(out[k], f64::max);
            }
        }
        out
    }

    /// Per-fiber largest entry modulus over every stored monomial.
    pub fn norms(&self) -> Vec<f64> {
        self.clone().with_valid(COMPLETE).window_norms()
    }

    /// Evaluates at a point of the times.
    pub fn eval(&self, t: &[Complex64]) -> Result<AMatrix> {
        if t.len() != self.basis.t {
            return Err(Error::DimensionMismatch(format!("{} times for a {}-time basis", t.len(), self.basis.t)));
        }
        let mut acc = AMatrix::zeros(self.m(), self.size(), self.size());
        for (i, c) in self.coeffs.iter().enumerate() {
            let w: Complex64 = self.basis.exps[i]
                .iter()
                .zip(t)
                .map(|(&e, &x)| x.powi(e as i32))
                .product();
            acc = acc.add(&c.scale(w))?;
        }
        Ok(acc)
    }
}
