//! Truncated polarized module: Fourier-lattice polarization, Grassmannian
//! points as frames, block decompositions between polarizations, idempotents
//! in the similarity class of the reference projection, and the holomorphic
//! retraction onto that class.
//!
//! Coordinates: lattice indices `-N..N-1`, stored with the `k >= 0` modes in
//! rows `0..N` (the "+" block, in increasing order) followed by the `k < 0`
//! modes in rows `N..2N` (from `-N` up to `-1`). The reference projection is
//! therefore `p = diag(I_N, 0_N)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalgebra::{AMatrix, CMat, Complex64};

/// Half-bandwidth `N` and fiber count `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationContext {
    pub n: usize,
    pub m: usize,
}

impl TruncationContext {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput(format!("need N >= 1 and m >= 1 (got N={n}, m={m})")));
        }
        Ok(TruncationContext { n, m })
    }

    /// Total dimension `2N`.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Lattice index carried by a storage row.
    pub fn lattice_index(&self, row: usize) -> i64 {
        let n = self.n as i64;
        let r = row as i64;
        if r < n {
            r
        } else {
            r - 2 * n
        }
    }

    /// Storage row of a lattice index in `-N..N-1`.
    pub fn row_of(&self, k: i64) -> usize {
        let n = self.n as i64;
        debug_assert!((-n..n).contains(&k));
        if k >= 0 {
            k as usize
        } else {
            (2 * n + k) as usize
        }
    }

    /// The reference projection `p = diag(I_N, 0_N)`.
    pub fn reference_projection(&self) -> AMatrix {
        let n = self.n;
        AMatrix::replicate(
            self.m,
            CMat::from_fn(2 * n, 2 * n, |i, j| {
                if i == j && i < n {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        )
    }

    pub fn with_n(&self, n: usize) -> Self {
        TruncationContext { n, m: self.m }
    }
}

/// A subspace given by a `2N x N` frame of full column rank in every fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct GrassmannPoint {
    frame: AMatrix,
}

impl GrassmannPoint {
    pub fn new(frame: AMatrix) -> Result<Self> {
        if frame.rows() != 2 * frame.cols() || frame.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "a frame must be 2N x N, got {:?}",
                frame.shape()
            )));
        }
        if let Some(fiber) = frame.rank_deficient_fiber() {
            return Err(Error::RankDeficient { fiber });
        }
        Ok(GrassmannPoint { frame })
    }

    /// The reference "+" subspace, spanned by the modes `k >= 0`.
    pub fn reference_plus(ctx: TruncationContext) -> Self {
        let n = ctx.n;
        GrassmannPoint {
            frame: AMatrix::replicate(ctx.m, CMat::identity(2 * n, n)),
        }
    }

    /// The reference "-" subspace, spanned by the modes `k < 0`.
    pub fn reference_minus(ctx: TruncationContext) -> Self {
        let n = ctx.n;
        GrassmannPoint {
            frame: AMatrix::replicate(
                ctx.m,
                CMat::from_fn(2 * n, n, |i, j| {
                    if i == j + n {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }),
            ),
        }
    }

    pub fn frame(&self) -> &AMatrix {
        &self.frame
    }

    pub fn context(&self) -> TruncationContext {
        TruncationContext { n: self.frame.cols(), m: self.frame.m() }
    }

    /// Coordinates along the "+" modes.
    pub fn top(&self) -> AMatrix {
        let n = self.frame.cols();
        self.frame.block(0, 0, n, n).expect("frame is 2N x N")
    }

    /// Coordinates along the "-" modes.
    pub fn bottom(&self) -> AMatrix {
        let n = self.frame.cols();
        self.frame.block(n, 0, n, n).expect("frame is 2N x N")
    }

    /// Transverse to the reference "-" subspace: the projection onto the "+"
    /// modes is an isomorphism in every fiber.
    pub fn is_transverse(&self) -> bool {
        !self.top().is_singular().expect("top block is square")
    }

    /// Right frame change `W -> W k`; same subspace.
    pub fn reframe(&self, k: &AMatrix) -> Result<Self> {
        GrassmannPoint::new(self.frame.matmul(k)?)
    }

    /// Embeds the point into a larger truncation by adjoining the new "+"
    /// modes `N..N'-1` and leaving the new "-" modes empty.
    pub fn extend_to(&self, n_new: usize) -> Result<Self> {
        let ctx = self.context();
        if n_new < ctx.n {
            return Err(Error::InvalidInput(format!("cannot shrink a frame from N={} to N={n_new}", ctx.n)));
        }
        if n_new == ctx.n {
            return Ok(self.clone());
        }
        let big = ctx.with_n(n_new);
        let n = ctx.n;
        let fibers = self
            .frame
            .fibers()
            .iter()
            .map(|f| {
                let mut out = CMat::zeros(2 * n_new, n_new);
                for row in 0..2 * n {
                    let new_row = big.row_of(ctx.lattice_index(row));
                    for col in 0..n {
                        out[(new_row, col)] = f[(row, col)];
                    }
                }
                for k in n..n_new {
                    out[(k, k)] = Complex64::new(1.0, 0.0);
                }
                out
            })
            .collect();
        GrassmannPoint::new(AMatrix::new(fibers)?)
    }
}

/// Frame pair of a direct-sum splitting `H = H+ (+) H-`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polarization {
    plus: AMatrix,
    minus: AMatrix,
}

impl Polarization {
    pub fn new(plus: AMatrix, minus: AMatrix) -> Result<Self> {
        let joined = plus.hstack(&minus)?;
        if !joined.is_square() {
            return Err(Error::DimensionMismatch("polarization frames must fill the space".into()));
        }
        if joined.is_singular()? {
            return Err(Error::NotComplementary);
        }
        Ok(Polarization { plus, minus })
    }

    pub fn from_points(plus: &GrassmannPoint, minus: &GrassmannPoint) -> Result<Self> {
        Self::new(plus.frame().clone(), minus.frame().clone())
    }

    pub fn reference(ctx: TruncationContext) -> Self {
        Polarization {
            plus: GrassmannPoint::reference_plus(ctx).frame,
            minus: GrassmannPoint::reference_minus(ctx).frame,
        }
    }

    pub fn plus(&self) -> &AMatrix {
        &self.plus
    }

    pub fn minus(&self) -> &AMatrix {
        &self.minus
    }

    /// The same summands with the roles of "+" and "-" exchanged.
    pub fn swapped(&self) -> Self {
        Polarization { plus: self.minus.clone(), minus: self.plus.clone() }
    }

    /// `[plus | minus]`: direct-sum coordinates to ambient coordinates.
    pub fn joined(&self) -> AMatrix {
        self.plus.hstack(&self.minus).expect("validated at construction")
    }
}

/// Idempotent `r` with `r^2 = r` and trace `N` in every fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct Idempotent {
    r: AMatrix,
}

/// Idempotency and trace tolerance, scaled by `max(1, ‖r‖²)`.
pub const IDEMPOTENT_TOL: f64 = 1e-10;

impl Idempotent {
    pub fn new(r: AMatrix) -> Result<Self> {
        if !r.is_square() || !r.rows().is_multiple_of(2) {
            return Err(Error::NotIdempotent(format!("shape {:?} is not 2N x 2N", r.shape())));
        }
        let n = r.rows() / 2;
        let scale = r.norm_inf().powi(2).max(1.0);
        let defect = r.matmul(&r)?.sub(&r)?.norm_inf();
        if defect > IDEMPOTENT_TOL * scale {
            return Err(Error::NotIdempotent(format!("‖r² - r‖ = {defect:e}")));
        }
        let trace = r.trace()?;
        if let Some(t) = trace.fibers().iter().find(|t| (**t - Complex64::new(n as f64, 0.0)).norm() > 1e-8 * scale) {
            return Err(Error::NotIdempotent(format!("trace {t} differs from {n}")));
        }
        Ok(Idempotent { r })
    }

    pub fn reference(ctx: TruncationContext) -> Self {
        Idempotent { r: ctx.reference_projection() }
    }

    pub fn matrix(&self) -> &AMatrix {
        &self.r
    }

    pub fn complement(&self) -> Self {
        Idempotent { r: self.r.identity_minus().expect("square") }
    }
}

/// Frame of the graph `{(x, S x)}` of `S` from the "+" modes to the "-" modes.
pub fn graph_of(s: &AMatrix) -> Result<GrassmannPoint> {
    if !s.is_square() {
        return Err(Error::NotSquare { rows: s.rows(), cols: s.cols() });
    }
    let top = AMatrix::identity(s.m(), s.cols());
    GrassmannPoint::new(top.vstack(s)?)
}

/// The idempotent with range `span(w)` and kernel `span(complement)`.
pub fn idempotent_of(w: &GrassmannPoint, complement: &GrassmannPoint) -> Result<Idempotent> {
    let n = w.frame().cols();
    let joined = w.frame().hstack(complement.frame())?;
    if !joined.is_square() {
        return Err(Error::DimensionMismatch("frames must have N columns each".into()));
    }
    let inv = joined.inv().map_err(|e| match e {
        Error::SingularFiber { .. } => Error::NotComplementary,
        other => other,
    })?;
    let coords = inv.block(0, 0, n, 2 * n)?;
    Ok(Idempotent { r: w.frame().matmul(&coords)? })
}

/// Blocks of the identity map written from `src` direct-sum coordinates to
/// `dst` direct-sum coordinates: `a: + -> +`, `b: - -> +`, `c: + -> -`,
/// `d: - -> -`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDecomposition {
    pub a: AMatrix,
    pub b: AMatrix,
    pub c: AMatrix,
    pub d: AMatrix,
}

impl BlockDecomposition {
    pub fn assemble(&self) -> Result<AMatrix> {
        AMatrix::from_blocks(&self.a, &self.b, &self.c, &self.d)
    }
}

pub fn block_decomposition(src: &Polarization, dst: &Polarization) -> Result<BlockDecomposition> {
    let n = src.plus().cols();
    if dst.plus().cols() != n || src.plus().rows() != dst.plus().rows() {
        return Err(Error::DimensionMismatch("polarizations live in different truncations".into()));
    }
    let change = dst.joined().solve(&src.joined())?;
    Ok(BlockDecomposition {
        a: change.block(0, 0, n, n)?,
        b: change.block(0, n, n, n)?,
        c: change.block(n, 0, n, n)?,
        d: change.block(n, n, n, n)?,
    })
}

/// `g(x, y) = x y + (1 - x)(1 - y)`.
pub fn similarity_bridge(x: &AMatrix, y: &AMatrix) -> Result<AMatrix> {
    let one_x = x.identity_minus()?;
    let one_y = y.identity_minus()?;
    x.matmul(y)?.add(&one_x.matmul(&one_y)?)
}

/// Holomorphic retraction `r(x) = g(p, x)^{-1} p g(p, x)` onto the similarity
/// class of `p`.
pub fn retract_to_lambda(p: &Idempotent, x: &AMatrix) -> Result<Idempotent> {
    let g = similarity_bridge(p.matrix(), x)?;
    let pg = p.matrix().matmul(&g)?;
    let r = g.solve(&pg).map_err(|e| match e {
        Error::SingularFiber { .. } => Error::OutsideNeighborhood,
        other => other,
    })?;
    Idempotent::new(r)
}

/// JSON form of frames and idempotents: one row-major array per fiber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDocument {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixDocument {
    fn from_matrix(n: usize, x: &AMatrix) -> Self {
        let flat = |part: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            x.fibers()
                .iter()
                .map(|f| f.row_iter().flat_map(|row| row.iter().map(part).collect::<Vec<_>>()).collect())
                .collect()
        };
        MatrixDocument { n, m: x.m(), re: flat(|z| z.re), im: flat(|z| z.im) }
    }

    fn to_matrix(&self, rows: usize, cols: usize) -> Result<AMatrix> {
        if self.re.len() != self.m || self.im.len() != self.m || self.m == 0 {
            return Err(Error::InvalidInput(format!("expected {} fibers in re/im", self.m)));
        }
        let fibers = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(re, im)| {
                if re.len() != rows * cols || im.len() != rows * cols {
                    return Err(Error::InvalidInput(format!(
                        "fiber holds {} entries, expected {}",
                        re.len(),
                        rows * cols
                    )));
                }
                Ok(CMat::from_fn(rows, cols, |i, j| Complex64::new(re[i * cols + j], im[i * cols + j])))
            })
            .collect::<Result<Vec<_>>>()?;
        AMatrix::new(fibers)
    }

    pub fn from_point(w: &GrassmannPoint) -> Self {
        Self::from_matrix(w.context().n, w.frame())
    }

    pub fn from_idempotent(r: &Idempotent) -> Self {
        Self::from_matrix(r.matrix().rows() / 2, r.matrix())
    }

    pub fn to_point(&self) -> Result<GrassmannPoint> {
        GrassmannPoint::new(self.to_matrix(2 * self.n, self.n)?)
    }

    pub fn to_idempotent(&self) -> Result<Idempotent> {
        Idempotent::new(self.to_matrix(2 * self.n, 2 * self.n)?)
    }
}
