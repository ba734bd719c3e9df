//! KP hierarchy checks: Lax and zero-curvature residuals for pseudodifferential
//! operators with matrix coefficients over `C(Y)`, and the three-term
//! trisecant residual of tau functions.

pub mod dressing;
pub mod poly;
pub mod psdo;

use serde::Serialize;

pub use dressing::{baker_coefficients, lax_from_dressing, DressingSampling};
pub use poly::{Basis, Poly};
pub use psdo::{commutator, minus_part, plus_part, psdo_mul, psdo_pow, PsdoSymbol, Window};

use crate::error::{Error, Result};
use crate::grassmann::GrassmannPoint;
use crate::opalgebra::{AValue, Complex64};
use crate::tauflow::{shift_times, tau_at, GammaElement};

/// Largest tolerated leading/order-zero defect in a Lax operator.
const SHAPE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// Per-fiber sup norm over the checked window.
    pub residual: Vec<f64>,
    /// Largest residual divided by the size of the compared terms.
    pub relative: f64,
    pub window: Window,
    /// Number of order/monomial slots that were compared.
    #[serde(skip)]
    pub checked: usize,
}

impl ResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks `L = ∂ + Σ_{i≥0} a_i ∂^{-1-i}`.
pub fn check_lax_shape(l: &PsdoSymbol) -> Result<()> {
    if l.top() != Some(1) {
        return Err(Error::ShapeViolation(format!("top order {:?}, expected 1", l.top())));
    }
    let lead = l.coefficient(1).expect("top order present");
    let identity = Poly::constant(lead.basis(), crate::opalgebra::AMatrix::identity(l.m(), l.size()));
    let defect = lead.sub(&identity)?.norms().into_iter().fold(0.0, f64::max);
    if defect > SHAPE_TOL {
        return Err(Error::ShapeViolation(format!("leading coefficient differs from 1 by {defect:e}")));
    }
    let zeroth = l.coefficient(0).expect("order 0 in range").norms().into_iter().fold(0.0, f64::max);
    let scale = l.support().iter().map(|&o| l.coefficient(o).unwrap().norms().into_iter().fold(0.0, f64::max)).fold(1.0, f64::max);
    if zeroth > SHAPE_TOL * scale {
        return Err(Error::ShapeViolation(format!("order-0 coefficient of size {zeroth:e}")));
    }
    Ok(())
}

fn flow_index(l: &PsdoSymbol, k: usize) -> Result<usize> {
    if k == 0 || k > l.basis().times() || k > l.window().kmax {
        return Err(Error::InvalidInput(format!(
            "flow index {k} outside 1..={}",
            l.basis().times().min(l.window().kmax)
        )));
    }
    Ok(k - 1)
}

fn report(lhs: &PsdoSymbol, rhs: &PsdoSymbol) -> Result<ResidualReport> {
    let diff = lhs.sub(rhs)?;
    let (residual, checked) = diff.window_norms();
    let scale = lhs
        .window_norms_like(&diff)
        .0
        .into_iter()
        .chain(rhs.window_norms_like(&diff).0)
        .fold(0.0, f64::max);
    let worst = residual.iter().copied().fold(0.0, f64::max);
    let relative = if scale > 0.0 { worst / scale } else { worst };
    Ok(ResidualReport { residual, relative, window: lhs.window(), checked })
}

/// `∂L/∂t_k - [(L^k)_+, L]` over the window where both sides are exact.
pub fn lax_residual(l: &PsdoSymbol, k: usize) -> Result<ResidualReport> {
    check_lax_shape(l)?;
    let idx = flow_index(l, k)?;
    let p = plus_part(&psdo_pow(l, k)?);
    report(&l.derivative_t(idx)?, &commutator(&p, l)?)
}

/// `∂_k P^(l) - ∂_l P^(k) + [P^(l), P^(k)]` with `P^(j) = (L^j)_+`.
pub fn zero_curvature_residual(l: &PsdoSymbol, k: usize, j: usize) -> Result<ResidualReport> {
    check_lax_shape(l)?;
    let (ik, ij) = (flow_index(l, k)?, flow_index(l, j)?);
    let pk = plus_part(&psdo_pow(l, k)?);
    let pj = plus_part(&psdo_pow(l, j)?);
    let lhs = pj.derivative_t(ik)?.add(&commutator(&pj, &pk)?)?;
    report(&lhs, &pk.derivative_t(ij)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrisecantResidual {
    /// Signed three-term sum per fiber.
    pub sum: AValue,
    /// `|sum|` over the largest term, per fiber.
    pub relative: Vec<f64>,
    pub terms: [AValue; 3],
}

impl TrisecantResidual {
    pub fn max_relative(&self) -> f64 {
        self.relative.iter().copied().fold(0.0, f64::max)
    }
}

/// `Σ (z_i - z_j)(z_k - z_l) τ(t + [z_i] + [z_j]) τ(t + [z_k] + [z_l])` over the
/// pairings `(01|23)`, `(02|31)`, `(03|12)`.
pub fn trisecant_residual(w: &GrassmannPoint, g: &GammaElement, z: [Complex64; 4]) -> Result<TrisecantResidual> {
    let tau_shifted = |i: usize, j: usize| -> Result<AValue> {
        let shifted = shift_times(&shift_times(g, z[i])?, z[j])?;
        Ok(tau_at(w, &shifted)?.0)
    };
    let pairings = [(0, 1, 2, 3), (0, 2, 3, 1), (0, 3, 1, 2)];
    let mut terms = Vec::with_capacity(3);
    for (i, j, k, l) in pairings {
        let c = (z[i] - z[j]) * (z[k] - z[l]);
        let product = &tau_shifted(i, j)? * &tau_shifted(k, l)?;
        terms.push(product.map(|x| x * c));
    }
    let sum = &(&terms[0] + &terms[1]) + &terms[2];
    let relative = (0..sum.m())
        .map(|f| {
            let scale = terms.iter().map(|t| t.fiber(f).norm()).fold(0.0, f64::max);
            if scale > 0.0 {
                sum.fiber(f).norm() / scale
            } else {
                0.0
            }
        })
        .collect();
    let terms: [AValue; 3] = terms.try_into().expect("three pairings");
    Ok(TrisecantResidual { sum, relative, terms })
}
