//! Operator cross-ratio in affine-coordinate and polarization-pair form, the
//! transition-map predeterminant, and the block-determinant tau value.
//!
//! Products are evaluated strictly left to right as written; none of the
//! factors are assumed to commute.

use crate::error::{Error, Result};
use crate::grassmann::GrassmannPoint;
use crate::opalgebra::{AMatrix, AValue};

/// Least-squares residual above which two frames are said to span different
/// subspaces.
pub const SPAN_TOL: f64 = 1e-8;

fn same_square_shape(mats: &[&AMatrix]) -> Result<()> {
    let first = mats[0];
    if !first.is_square() {
        return Err(Error::NotSquare { rows: first.rows(), cols: first.cols() });
    }
    for x in &mats[1..] {
        x.fiber_count_matches(first.m())?;
        if x.shape() != first.shape() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", first.shape(), x.shape())));
        }
    }
    Ok(())
}

fn singular_as(err: Error, replacement: Error) -> Error {
    match err {
        Error::SingularFiber { .. } => replacement,
        other => other,
    }
}

/// `cross(a, b; c, d) = (a - c)(a - b)^{-1}(b - d)(c - d)^{-1}`.
pub fn cross(a: &AMatrix, b: &AMatrix, c: &AMatrix, d: &AMatrix) -> Result<AMatrix> {
    same_square_shape(&[a, b, c, d])?;
    let ab_inv = a.sub(b)?.inv().map_err(|e| singular_as(e, Error::DegeneratePair("a - b")))?;
    let cd_inv = c.sub(d)?.inv().map_err(|e| singular_as(e, Error::DegeneratePair("c - d")))?;
    a.sub(c)?.matmul(&ab_inv)?.matmul(&b.sub(d)?)?.matmul(&cd_inv)
}

/// Polarization-pair cross-ratio
/// `(P₋P₊ - 1)^{-1}(P₋Q₊ - 1)(Q₋Q₊ - 1)^{-1}(Q₋P₊ - 1)`.
pub fn cross_pol(p_plus: &AMatrix, p_minus: &AMatrix, q_plus: &AMatrix, q_minus: &AMatrix) -> Result<AMatrix> {
    same_square_shape(&[p_plus, p_minus, q_plus, q_minus])?;
    let first = p_minus
        .matmul(p_plus)?
        .minus_identity()?
        .inv()
        .map_err(|e| singular_as(e, Error::DegeneratePolarizations("P₋P₊ - 1")))?;
    let third = q_minus
        .matmul(q_plus)?
        .minus_identity()?
        .inv()
        .map_err(|e| singular_as(e, Error::DegeneratePolarizations("Q₋Q₊ - 1")))?;
    let second = p_minus.matmul(q_plus)?.minus_identity()?;
    let fourth = q_minus.matmul(p_plus)?.minus_identity()?;
    first.matmul(&second)?.matmul(&third)?.matmul(&fourth)
}

/// Coordinatizing maps for a pair whose "+" summand is the graph of `s` and
/// whose "-" summand is the graph of `t` over a reference pair, arranged so
/// that `cross_pol` evaluates to `1 - T S` and its determinant to
/// `det(1 - S T)`.
pub struct Coordinatized {
    pub p_plus: AMatrix,
    pub p_minus: AMatrix,
    pub q_plus: AMatrix,
    pub q_minus: AMatrix,
}

pub fn coordinatize_graphs(s: &AMatrix, t: &AMatrix) -> Result<Coordinatized> {
    same_square_shape(&[s, t])?;
    let zero = AMatrix::zeros(s.m(), s.rows(), s.cols());
    Ok(Coordinatized { p_plus: zero.clone(), p_minus: t.clone(), q_plus: s.clone(), q_minus: zero })
}

/// Solves `u k = v` in the least-squares sense and rejects the solve when the
/// residual shows that `u` and `v` span different subspaces.
pub fn transition(u: &GrassmannPoint, v: &GrassmannPoint) -> Result<AMatrix> {
    let (uf, vf) = (u.frame(), v.frame());
    if uf.shape() != vf.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", uf.shape(), vf.shape())));
    }
    let uh = uf.adjoint();
    let k = uh.matmul(uf)?.solve(&uh.matmul(vf)?)?;
    let residuals = uf.matmul(&k)?.sub(vf)?.fiber_norms_inf();
    let scales = vf.fiber_norms_inf();
    let worst = residuals
        .iter()
        .zip(&scales)
        .map(|(r, s)| r / (1.0 + s))
        .fold(0.0, f64::max);
    if worst > SPAN_TOL {
        return Err(Error::DifferentSpans { residual: worst });
    }
    Ok(k)
}

/// Frame quotient `β⁻¹α`: the `k` with `β k = α`.
pub fn tfunction(alpha: &GrassmannPoint, beta: &GrassmannPoint) -> Result<AMatrix> {
    transition(beta, alpha)
}

/// `det(1 - c a^{-1} b d^{-1})`.
pub fn tau_block(a: &AMatrix, b: &AMatrix, c: &AMatrix, d: &AMatrix) -> Result<AValue> {
    same_square_shape(&[a, b, c, d])?;
    let a_inv = a.inv().map_err(|e| singular_as(e, Error::SingularBlock("a")))?;
    let d_inv = d.inv().map_err(|e| singular_as(e, Error::SingularBlock("d")))?;
    c.matmul(&a_inv)?.matmul(b)?.matmul(&d_inv)?.identity_minus()?.det()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{block_decomposition, graph_of, idempotent_of, Polarization, TruncationContext};
    use crate::opalgebra::{c64, cmat_max_abs, CMat, Complex64};
    use crate::rng::SeededRng;

    fn scalar(z: f64) -> AMatrix {
        AMatrix::scalar(&AValue::splat(1, c64(z, 0.0)), 1)
    }

    fn diag(values: &[Complex64]) -> AMatrix {
        AMatrix::new(vec![CMat::from_diagonal(&nalgebra::DVector::from_vec(values.to_vec()))]).unwrap()
    }

    #[test]
    fn scalar_cross_ratio() {
        let x = cross(&scalar(0.0), &scalar(1.0), &scalar(2.0), &scalar(3.0)).unwrap();
        // (-2)(-1)^{-1}(-2)(-1)^{-1}
        assert_eq!(x.fiber(0)[(0, 0)], c64(4.0, 0.0));
    }

    #[test]
    fn diagonal_cross_ratio_is_elementwise() {
        let mut rng = SeededRng::new(21);
        let pts: Vec<Vec<Complex64>> = (0..4).map(|_| (0..3).map(|_| rng.complex()).collect()).collect();
        let x = cross(&diag(&pts[0]), &diag(&pts[1]), &diag(&pts[2]), &diag(&pts[3])).unwrap();
        for i in 0..3 {
            let (a, b, c, d) = (pts[0][i], pts[1][i], pts[2][i], pts[3][i]);
            let expect = (a - c) / (a - b) * (b - d) / (c - d);
            assert!((x.fiber(0)[(i, i)] - expect).norm() <= 1e-12 * expect.norm());
        }
    }

    #[test]
    fn coincident_a_c_gives_zero() {
        let mut rng = SeededRng::new(22);
        let a = rng.amatrix(2, 3, 3);
        let b = rng.well_conditioned(2, 3).add(&a).unwrap();
        let d = rng.amatrix(2, 3, 3);
        let x = cross(&a, &b, &a, &d).unwrap();
        assert_eq!(x.max_abs(), 0.0);
    }

    #[test]
    fn degenerate_pairs() {
        let a = scalar(1.0);
        assert!(matches!(cross(&a, &a, &scalar(2.0), &scalar(3.0)), Err(Error::DegeneratePair("a - b"))));
        assert!(matches!(cross(&a, &scalar(0.0), &scalar(2.0), &scalar(2.0)), Err(Error::DegeneratePair("c - d"))));
    }

    #[test]
    fn moebius_invariance_of_scalar_cross_ratio() {
        let mut rng = SeededRng::new(23);
        for _ in 0..50 {
            let pts: Vec<Complex64> = (0..4).map(|_| rng.complex()).collect();
            let (al, be, ga, de) = (rng.complex(), rng.complex(), rng.complex(), rng.complex());
            if (al * de - be * ga).norm() < 0.1 {
                continue;
            }
            let mob = |z: Complex64| (al * z + be) / (ga * z + de);
            let as_mat = |z: Complex64| AMatrix::scalar(&AValue::splat(1, z), 1);
            let x = cross(&as_mat(pts[0]), &as_mat(pts[1]), &as_mat(pts[2]), &as_mat(pts[3])).unwrap();
            let y = cross(
                &as_mat(mob(pts[0])),
                &as_mat(mob(pts[1])),
                &as_mat(mob(pts[2])),
                &as_mat(mob(pts[3])),
            )
            .unwrap();
            let (x, y) = (x.fiber(0)[(0, 0)], y.fiber(0)[(0, 0)]);
            assert!((x - y).norm() <= 1e-10 * (1.0 + x.norm()), "{x} vs {y}");
        }
    }

    #[test]
    fn cross_pol_special_cases() {
        let mut rng = SeededRng::new(24);
        let p = rng.small(2, 3, 3, 0.5);
        let m = rng.small(2, 3, 3, 0.5);
        let same = cross_pol(&p, &m, &p, &m).unwrap();
        assert!(same.minus_identity().unwrap().norm_inf() <= 1e-12);

        let zero = AMatrix::zeros(2, 3, 3);
        let t = rng.amatrix(2, 3, 3);
        let x = cross_pol(&zero, &zero, &zero, &t).unwrap();
        assert_eq!(x, AMatrix::identity(2, 3));
    }

    #[test]
    fn cross_pol_matches_literal_product() {
        let mut rng = SeededRng::new(25);
        for _ in 0..20 {
            let (pp, pm, qp, qm) = (
                rng.small(1, 3, 3, 0.6),
                rng.small(1, 3, 3, 0.6),
                rng.small(1, 3, 3, 0.6),
                rng.small(1, 3, 3, 0.6),
            );
            let got = cross_pol(&pp, &pm, &qp, &qm).unwrap();
            // right-to-left accumulation with explicit nalgebra inverses
            let (pp, pm, qp, qm) = (pp.fiber(0), pm.fiber(0), qp.fiber(0), qm.fiber(0));
            let i = CMat::identity(3, 3);
            let f1 = (pm * pp - &i).try_inverse().unwrap();
            let f2 = pm * qp - &i;
            let f3 = (qm * qp - &i).try_inverse().unwrap();
            let f4 = qm * pp - &i;
            let oracle = f1 * (f2 * (f3 * f4));
            assert!(cmat_max_abs(&(got.fiber(0) - &oracle)) <= 1e-12 * (1.0 + cmat_max_abs(&oracle)));
        }
    }

    #[test]
    fn transitions() {
        let mut rng = SeededRng::new(26);
        let c = TruncationContext::new(3, 2).unwrap();
        let u = graph_of(&rng.amatrix(2, 3, 3)).unwrap();
        assert!(transition(&u, &u).unwrap().minus_identity().unwrap().norm_inf() <= 1e-10);
        let k0 = rng.well_conditioned(2, 3);
        let v = u.reframe(&k0).unwrap();
        assert!(transition(&u, &v).unwrap().sub(&k0).unwrap().norm_inf() <= 1e-10);
        let other = GrassmannPoint::reference_minus(c);
        assert!(matches!(transition(&u, &other), Err(Error::DifferentSpans { .. })));
    }

    #[test]
    fn tfunction_cases() {
        let mut rng = SeededRng::new(27);
        let c = TruncationContext::new(3, 2).unwrap();
        let beta = GrassmannPoint::reference_plus(c);
        assert!(tfunction(&beta, &beta).unwrap().minus_identity().unwrap().norm_inf() <= 1e-12);
        let k = rng.well_conditioned(2, 3);
        let alpha = beta.reframe(&k).unwrap();
        assert!(tfunction(&alpha, &beta).unwrap().sub(&k).unwrap().norm_inf() <= 1e-10);
    }

    #[test]
    fn tau_block_cases() {
        let mut rng = SeededRng::new(28);
        let a = rng.well_conditioned(2, 3);
        let d = rng.well_conditioned(2, 3);
        let zero = AMatrix::zeros(2, 3, 3);
        let b = rng.amatrix(2, 3, 3);
        for v in [tau_block(&a, &b, &zero, &d).unwrap(), tau_block(&a, &zero, &b, &d).unwrap()] {
            assert!(v.fibers().iter().all(|z| (z - c64(1.0, 0.0)).norm() <= 1e-14));
        }
        let eps = 0.3;
        let v = tau_block(&scalar(1.0), &scalar(eps), &scalar(eps), &scalar(1.0)).unwrap();
        assert!((v.fiber(0) - c64(1.0 - eps * eps, 0.0)).norm() <= 1e-15);

        assert!(matches!(tau_block(&zero, &b, &b, &d), Err(Error::SingularBlock("a"))));
    }

    #[test]
    fn det_cross_pol_equals_tau_block() {
        let mut rng = SeededRng::new(29);
        for _ in 0..20 {
            let (a, d) = (rng.well_conditioned(2, 3), rng.well_conditioned(2, 3));
            let (b, c) = (rng.small(2, 3, 3, 0.7), rng.small(2, 3, 3, 0.7));
            let s = c.matmul(&a.inv().unwrap()).unwrap();
            let t = b.matmul(&d.inv().unwrap()).unwrap();
            let co = coordinatize_graphs(&s, &t).unwrap();
            let lhs = cross_pol(&co.p_plus, &co.p_minus, &co.q_plus, &co.q_minus).unwrap().det().unwrap();
            let rhs = tau_block(&a, &b, &c, &d).unwrap();
            for (l, r) in lhs.fibers().iter().zip(rhs.fibers()) {
                assert!((l - r).norm() <= 1e-10 * (1.0 + r.norm()));
            }
        }
    }

    /// `H+ = graph(S)`, `H- = graph(T)` over the reference pair; the frame of
    /// `H+` against the projection of the reference "+" frame onto `H+` along
    /// `H-` has quotient `1 - T S`.
    #[test]
    fn det_tfunction_equals_tau_block() {
        let mut rng = SeededRng::new(30);
        let ctx = TruncationContext::new(3, 2).unwrap();
        for _ in 0..10 {
            let s = rng.small(2, 3, 3, 0.7);
            let t = rng.small(2, 3, 3, 0.7);
            let h_plus = graph_of(&s).unwrap();
            let h_minus = GrassmannPoint::new(t.vstack(&AMatrix::identity(2, 3)).unwrap()).unwrap();
            let src = Polarization::from_points(&h_plus, &h_minus).unwrap();
            let blocks = block_decomposition(&src, &Polarization::reference(ctx)).unwrap();
            let tau = tau_block(&blocks.a, &blocks.b, &blocks.c, &blocks.d).unwrap();

            let r = idempotent_of(&h_plus, &h_minus).unwrap();
            let beta = GrassmannPoint::new(
                r.matrix().matmul(GrassmannPoint::reference_plus(ctx).frame()).unwrap(),
            )
            .unwrap();
            let t_fn = tfunction(&h_plus, &beta).unwrap();
            let det = t_fn.det().unwrap();
            for (l, r) in det.fibers().iter().zip(tau.fibers()) {
                assert!((l - r).norm() <= 1e-10 * (1.0 + r.norm()), "{l} vs {r}");
            }
        }
    }
}
