//! Independent reference formulas shared by the integration tests.
#![allow(dead_code)]

use tau_lab::opalgebra::{c64, Complex64};
use tau_lab::tauflow::Soliton;

/// `exp Σ t_k x^k · Π 1/(1 - w x)`, the flow symbol evaluated at `x`, with
/// Miwa shifts `w` applied in closed form.
pub fn flow_symbol(times: &[Complex64], shifts: &[Complex64], x: Complex64) -> Complex64 {
    let e: Complex64 = times.iter().enumerate().map(|(k, t)| t * x.powi(k as i32 + 1)).sum();
    shifts.iter().fold(e.exp(), |acc, w| acc / (1.0 - w * x))
}

/// `det(δ_ij + c_i (1 - f(p_i)/f(q_j)) / (p_i - q_j))` for a finite sum of
/// soliton terms.
pub fn soliton_tau(sols: &[Soliton], times: &[Complex64], shifts: &[Complex64]) -> Complex64 {
    let f = |x| flow_symbol(times, shifts, x);
    let r = sols.len();
    let mut a: Vec<Vec<Complex64>> = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    delta + sols[i].c * (1.0 - f(sols[i].p) / f(sols[j].q)) / (sols[i].p - sols[j].q)
                })
                .collect()
        })
        .collect();
    permutation_det(&mut a)
}

/// Determinant by expansion over permutations (small sizes only).
pub fn permutation_det(a: &mut [Vec<Complex64>]) -> Complex64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = c64(0.0, 0.0);
    permute(&mut perm, 0, a, &mut total);
    total
}

fn permute(perm: &mut Vec<usize>, k: usize, a: &[Vec<Complex64>], total: &mut Complex64) {
    let n = perm.len();
    if k == n {
        let mut inversions = 0;
        for i in 0..n {
            for j in i + 1..n {
                if perm[i] > perm[j] {
                    inversions += 1;
                }
            }
        }
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        *total += (0..n).map(|i| a[i][perm[i]]).product::<Complex64>() * sign;
        return;
    }
    for i in k..n {
        perm.swap(k, i);
        permute(perm, k + 1, a, total);
        perm.swap(k, i);
    }
}

/// Genus-0 Szegő determinant `det(1/(b_i - a_j))` by permutation expansion.
pub fn cauchy_by_expansion(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut m: Vec<Vec<Complex64>> = b.iter().map(|&y| a.iter().map(|&x| 1.0 / (y - x)).collect()).collect();
    permutation_det(&mut m)
}

/// `θ[a,b](z | τ)` by a plain symmetric lattice sum over `|n| ≤ terms`.
pub fn theta_naive(z: Complex64, tau: Complex64, a: f64, b: f64, terms: i64) -> Complex64 {
    let i_pi = c64(0.0, std::f64::consts::PI);
    (-terms..=terms)
        .map(|n| {
            let s = n as f64 + a;
            (i_pi * tau * s * s + 2.0 * i_pi * s * (z + b)).exp()
        })
        .sum()
}

pub fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
