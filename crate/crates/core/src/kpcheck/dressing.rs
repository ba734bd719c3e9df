//! Dressing operator `W = 1 + Σ w_i ∂^{-i}` read off from Baker functions and
//! the Lax operator `L = W ∂ W⁻¹`.
//!
//! `ψ(t, ζ) = Σ_i w_i(t) ζ^{-i}` is sampled on a circle `|ζ| = R` to get each
//! `w_i(t)`, and `w_i` is sampled on a torus `|t_k| = r` to get its Taylor
//! coefficients up to the degree cap. Both steps are discrete Cauchy integrals.

use std::f64::consts::TAU;
use std::sync::Arc;

use super::poly::{Basis, Poly};
use super::psdo::{psdo_mul, PsdoSymbol, Window};
use crate::error::{Error, Result};
use crate::grassmann::GrassmannPoint;
use crate::opalgebra::{AMatrix, AValue, Complex64};
use crate::tauflow::{baker, GammaElement};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DressingSampling {
    pub zeta_radius: f64,
    pub zeta_points: usize,
    pub time_radius: f64,
    pub time_points: usize,
}

impl Default for DressingSampling {
    fn default() -> Self {
        DressingSampling { zeta_radius: 2.0, zeta_points: 24, time_radius: 0.4, time_points: 12 }
    }
}

fn roots(count: usize, radius: f64) -> Vec<Complex64> {
    (0..count).map(|q| Complex64::from_polar(radius, TAU * q as f64 / count as f64)).collect()
}

/// Taylor coefficients of `w_1 .. w_M` in the times, one polynomial (with
/// `1x1` coefficients per fiber) for each `i`.
pub fn baker_coefficients(w: &GrassmannPoint, basis: &Arc<Basis>, depth: usize, sampling: DressingSampling) -> Result<Vec<Poly>> {
    let DressingSampling { zeta_radius, zeta_points, time_radius, time_points } = sampling;
    if zeta_radius <= 1.0 || zeta_points <= depth || time_points <= basis.degree_cap() || time_radius <= 0.0 {
        return Err(Error::InvalidInput(format!("sampling {sampling:?} too coarse for depth {depth}")));
    }
    let ctx = w.context();
    let m = ctx.m;
    let t_vars = basis.times();
    let zetas = roots(zeta_points, zeta_radius);
    let circle = roots(time_points, time_radius);
    let grid_size = time_points.pow(t_vars as u32);

    // samples[i][g] = w_{i+1} at grid point g, per fiber
    let mut samples = vec![vec![AValue::zero(m); grid_size]; depth];
    for (g, per_point) in (0..grid_size).map(|g| (g, grid_index(g, time_points, t_vars))) {
        let times: Vec<Complex64> = per_point.iter().map(|&q| circle[q]).collect();
        let flow = GammaElement::from_times(ctx, &times);
        let mut acc = vec![vec![Complex64::new(0.0, 0.0); m]; depth];
        for &zeta in &zetas {
            let psi = baker(w, &flow, zeta)?.psi;
            let mut power = Complex64::new(1.0, 0.0);
            for row in acc.iter_mut() {
                power *= zeta;
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot += psi.fiber(k) * power;
                }
            }
        }
        for (i, row) in acc.into_iter().enumerate() {
            samples[i][g] = AValue::new(row.into_iter().map(|z| z / zeta_points as f64).collect())?;
        }
    }

    let mut out = Vec::with_capacity(depth);
    for per_grid in samples {
        let coeffs = (0..basis.len())
            .map(|mono| {
                let exps = basis.exponents(mono);
                let mut acc = vec![Complex64::new(0.0, 0.0); m];
                for (g, value) in per_grid.iter().enumerate() {
                    let idx = grid_index(g, time_points, t_vars);
                    let weight: Complex64 = idx.iter().zip(exps).map(|(&q, &e)| circle[q].powi(-(e as i32))).product();
                    for (k, slot) in acc.iter_mut().enumerate() {
                        *slot += value.fiber(k) * weight;
                    }
                }
                AMatrix::from_avalue(&AValue::new(acc.into_iter().map(|z| z / grid_size as f64).collect()).expect("m >= 1"))
            })
            .collect();
        out.push(Poly::from_coeffs(basis, coeffs, basis.degree_cap() as i64)?);
    }
    Ok(out)
}

fn grid_index(mut g: usize, base: usize, digits: usize) -> Vec<usize> {
    let mut out = vec![0; digits];
    for d in out.iter_mut() {
        *d = g % base;
        g /= base;
    }
    out
}

/// `L = W ∂ W⁻¹` for `W = 1 + Σ_i w_i ∂^{-i}`, with `W⁻¹` as a Neumann series.
/// The `w_i` are treated as the head of an infinite series.
pub fn lax_from_dressing(w_coeffs: &[Poly], window: Window) -> Result<PsdoSymbol> {
    let first = w_coeffs.first().ok_or_else(|| Error::InvalidInput("no dressing coefficients".into()))?;
    let basis = first.basis().clone();
    let (m, n) = (first.m(), first.size());
    let depth = window.depth.min(w_coeffs.len());
    let terms = w_coeffs[..depth].iter().enumerate().map(|(i, p)| (-(i as i64) - 1, p.clone())).collect();
    let v = PsdoSymbol::from_terms(&basis, window, m, n, terms)?.truncated_below(-(window.depth as i64));
    let one = PsdoSymbol::identity(&basis, window, m, n);
    let dressing = one.add(&v)?;
    let minus_v = v.neg();
    let mut inverse = one.clone();
    let mut power = one;
    for _ in 0..window.depth {
        power = psdo_mul(&power, &minus_v)?;
        inverse = inverse.add(&power)?;
    }
    let d = PsdoSymbol::partial(&basis, window, m, n, 1)?;
    psdo_mul(&dressing, &psdo_mul(&d, &inverse)?)
}
