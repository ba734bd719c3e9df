//! The abelian flow group of symbols holomorphic and nonvanishing on the
//! closed disk, its action on Grassmannian frames, tau and Baker functions with
//! `C(Y)`-valued fibers, Miwa shifts of the times, and the mixed log-derivative
//! of `|tau|`.
//!
//! A flow element with symbol `f` is realized as the truncated Toeplitz
//! multiplication matrix `T(f)[i][j] = f_{i-j}` over lattice indices
//! `-N..N-1`. The lattice window is contiguous and `T(f)` is lower triangular in
//! lattice order, so `T(f) T(g) = T(f g)` holds exactly at every truncation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grassmann::{GrassmannPoint, TruncationContext};
use crate::opalgebra::{AMatrix, AValue, CMat, Complex64, Lu};

/// Default number of retained flow times.
pub const DEFAULT_TIMES: usize = 40;

/// Largest tolerated Miwa-shift tail `|z|^{K+1} / (K+1)`.
pub const SHIFT_TAIL: f64 = 1e-14;

/// Factor `(1 - z/ζ)^exponent` of a flow symbol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RationalFactor {
    pub zeta: Complex64,
    pub exponent: i32,
}

/// Flow element with symbol `exp(Σ t_k z^k) · Π (1 - z/ζ_i)^{e_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaElement {
    times: Vec<AValue>,
    factors: Vec<RationalFactor>,
    ctx: TruncationContext,
}

impl GammaElement {
    pub fn new(ctx: TruncationContext, times: Vec<AValue>, factors: Vec<RationalFactor>) -> Result<Self> {
        if let Some(t) = times.iter().find(|t| t.m() != ctx.m) {
            return Err(Error::FiberMismatch { left: ctx.m, right: t.m() });
        }
        for f in &factors {
            if f.zeta.norm() <= 1.0 || !f.zeta.is_finite() {
                return Err(Error::SymbolDomain(format!("|ζ| = {} must exceed 1", f.zeta.norm())));
            }
            if f.exponent == 0 {
                return Err(Error::SymbolDomain("rational factor with exponent 0".into()));
            }
        }
        Ok(GammaElement { times, factors, ctx })
    }

    pub fn identity(ctx: TruncationContext) -> Self {
        GammaElement { times: Vec::new(), factors: Vec::new(), ctx }
    }

    /// Same scalar times in every fiber.
    pub fn from_times(ctx: TruncationContext, times: &[Complex64]) -> Self {
        GammaElement {
            times: times.iter().map(|&t| AValue::splat(ctx.m, t)).collect(),
            factors: Vec::new(),
            ctx,
        }
    }

    /// `q_ζ(z) = 1 - z/ζ`.
    pub fn q(ctx: TruncationContext, zeta: Complex64) -> Result<Self> {
        Self::new(ctx, Vec::new(), vec![RationalFactor { zeta, exponent: 1 }])
    }

    pub fn times(&self) -> &[AValue] {
        &self.times
    }

    pub fn factors(&self) -> &[RationalFactor] {
        &self.factors
    }

    pub fn context(&self) -> TruncationContext {
        self.ctx
    }

    pub fn with_context(&self, ctx: TruncationContext) -> Result<Self> {
        Self::new(ctx, self.times.clone(), self.factors.clone())
    }

    /// Group product; the group is abelian so the order is immaterial.
    pub fn compose(&self, other: &GammaElement) -> Result<Self> {
        if self.ctx != other.ctx {
            return Err(Error::DimensionMismatch("flow elements from different truncations".into()));
        }
        let len = self.times.len().max(other.times.len());
        let zero = AValue::zero(self.ctx.m);
        let times = (0..len)
            .map(|k| {
                let a = self.times.get(k).unwrap_or(&zero);
                let b = other.times.get(k).unwrap_or(&zero);
                a + b
            })
            .collect();
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Ok(GammaElement { times, factors, ctx: self.ctx })
    }

    pub fn inverse(&self) -> Self {
        GammaElement {
            times: self.times.iter().map(|t| -t).collect(),
            factors: self
                .factors
                .iter()
                .map(|f| RationalFactor { zeta: f.zeta, exponent: -f.exponent })
                .collect(),
            ctx: self.ctx,
        }
    }

    /// Taylor coefficients `f_0..f_{len-1}` of the symbol, one vector per fiber.
    pub fn symbol_coefficients(&self, len: usize) -> Vec<Vec<Complex64>> {
        (0..self.ctx.m)
            .map(|fiber| {
                let mut log_series = vec![Complex64::new(0.0, 0.0); len];
                for (k, t) in self.times.iter().enumerate() {
                    if k + 1 < len {
                        log_series[k + 1] += t.fiber(fiber);
                    }
                }
                let mut coeffs = exp_series(&log_series);
                for f in &self.factors {
                    for _ in 0..f.exponent.unsigned_abs() {
                        if f.exponent > 0 {
                            multiply_linear_factor(&mut coeffs, f.zeta);
                        } else {
                            divide_linear_factor(&mut coeffs, f.zeta);
                        }
                    }
                }
                coeffs
            })
            .collect()
    }
}

/// `exp` of a power series with zero constant term: `n f_n = Σ_k k a_k f_{n-k}`.
fn exp_series(a: &[Complex64]) -> Vec<Complex64> {
    let len = a.len();
    let mut f = vec![Complex64::new(0.0, 0.0); len];
    if len == 0 {
        return f;
    }
    f[0] = Complex64::new(1.0, 0.0);
    for n in 1..len {
        let mut s = Complex64::new(0.0, 0.0);
        for k in 1..=n {
            if a[k] != Complex64::new(0.0, 0.0) {
                s += a[k] * f[n - k] * k as f64;
            }
        }
        f[n] = s / n as f64;
    }
    f
}

/// In place `f <- f · (1 - z/ζ)`.
fn multiply_linear_factor(f: &mut [Complex64], zeta: Complex64) {
    let w = zeta.inv();
    for n in (1..f.len()).rev() {
        let prev = f[n - 1];
        f[n] -= prev * w;
    }
}

/// In place `f <- f / (1 - z/ζ)`.
fn divide_linear_factor(f: &mut [Complex64], zeta: Complex64) {
    let w = zeta.inv();
    for n in 1..f.len() {
        let prev = f[n - 1];
        f[n] += prev * w;
    }
}

/// Truncated Toeplitz matrix of the symbol: unit diagonal, triangular in
/// lattice order.
pub fn gamma_matrix(g: &GammaElement) -> AMatrix {
    let ctx = g.ctx;
    let dim = ctx.dim();
    let coeffs = g.symbol_coefficients(dim);
    let fibers = coeffs
        .iter()
        .map(|c| {
            CMat::from_fn(dim, dim, |r, s| {
                let gap = ctx.lattice_index(r) - ctx.lattice_index(s);
                if gap >= 0 {
                    c[gap as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
        })
        .collect();
    AMatrix::new(fibers).expect("m >= 1")
}

/// `W -> g⁻¹ W`, realized as multiplication by the Toeplitz matrix of the
/// inverse symbol.
pub fn act(g: &GammaElement, w: &GrassmannPoint) -> Result<GrassmannPoint> {
    if w.context() != g.ctx {
        return Err(Error::DimensionMismatch(format!(
            "point in {:?}, flow element in {:?}",
            w.context(),
            g.ctx
        )));
    }
    GrassmannPoint::new(gamma_matrix(&g.inverse()).matmul(w.frame())?)
}

/// Anything that can produce a Grassmannian point at a requested truncation.
/// Used to measure how tau values stabilize as `N` grows.
pub trait PointSource {
    fn base_context(&self) -> TruncationContext;
    fn point_at(&self, n: usize) -> Result<GrassmannPoint>;
}

impl PointSource for GrassmannPoint {
    fn base_context(&self) -> TruncationContext {
        self.context()
    }

    fn point_at(&self, n: usize) -> Result<GrassmannPoint> {
        self.extend_to(n)
    }
}

/// Soliton datum: contributes the rank-one term `c · u vᵀ` with `v_k = p^k`
/// on the "+" modes and `u_l = q^{-l-1}` on the "-" modes.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Soliton {
    pub p: Complex64,
    pub q: Complex64,
    pub c: Complex64,
}

/// Graph of a finite-rank sum of soliton terms, one soliton list per fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct SolitonPoint {
    n: usize,
    fibers: Vec<Vec<Soliton>>,
}

impl SolitonPoint {
    pub fn new(n: usize, fibers: Vec<Vec<Soliton>>) -> Result<Self> {
        if n == 0 || fibers.is_empty() {
            return Err(Error::InvalidInput("soliton point needs N >= 1 and at least one fiber".into()));
        }
        for s in fibers.iter().flatten() {
            if s.p.norm() >= 1.0 || s.q.norm() >= 1.0 {
                return Err(Error::InvalidInput(format!("soliton parameters need |p|, |q| < 1 (got {s:?})")));
            }
            if s.p == s.q {
                return Err(Error::InvalidInput(format!("soliton needs p != q (got {s:?})")));
            }
        }
        Ok(SolitonPoint { n, fibers })
    }

    pub fn fibers(&self) -> &[Vec<Soliton>] {
        &self.fibers
    }

    /// The graph map `S: + -> -` at truncation `n`.
    pub fn graph_map(&self, n: usize) -> AMatrix {
        let fibers = self
            .fibers
            .iter()
            .map(|solitons| {
                let mut s = CMat::zeros(n, n);
                for sol in solitons {
                    // bottom row `r` carries lattice index `r - n`, so u = q^{n-1-r}
                    for r in 0..n {
                        let u = sol.q.powi((n - 1 - r) as i32);
                        for k in 0..n {
                            s[(r, k)] += sol.c * u * sol.p.powi(k as i32);
                        }
                    }
                }
                s
            })
            .collect();
        AMatrix::new(fibers).expect("at least one fiber")
    }
}

impl PointSource for SolitonPoint {
    fn base_context(&self) -> TruncationContext {
        TruncationContext { n: self.n, m: self.fibers.len() }
    }

    fn point_at(&self, n: usize) -> Result<GrassmannPoint> {
        crate::grassmann::graph_of(&self.graph_map(n))
    }
}

/// Tau value together with its predeterminant.
#[derive(Clone, Debug, PartialEq)]
pub struct TauEvaluation {
    pub value: AValue,
    pub predeterminant: AMatrix,
    /// Largest relative change of the value when `N` is doubled.
    pub stabilization_gap: f64,
}

fn require_nonsingular(x: &AMatrix, what: impl Fn() -> String) -> Result<()> {
    for lu in x.lu()? {
        if lu.is_singular() {
            return Err(Error::TransversalityLost(what()));
        }
    }
    Ok(())
}

/// `𝒯(g) = top(g⁻¹F) · top(F)⁻¹` and `τ = det 𝒯` at the point's own truncation.
pub fn tau_at(w: &GrassmannPoint, g: &GammaElement) -> Result<(AValue, AMatrix)> {
    let top = w.top();
    require_nonsingular(&top, || "the point is not transverse".into())?;
    let moved = act(g, w)?.top();
    require_nonsingular(&moved, || "top block of g⁻¹W is singular".into())?;
    // X T⁻¹ = (T⁻ᵀ Xᵀ)ᵀ
    let predeterminant = top.transpose().solve(&moved.transpose())?.transpose();
    let value = predeterminant.det()?;
    Ok((value, predeterminant))
}

fn relative_gap(a: &AValue, b: &AValue) -> f64 {
    a.fibers()
        .iter()
        .zip(b.fibers())
        .map(|(x, y)| (x - y).norm() / y.norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Tau function of the point under `g`, with the stabilization gap measured by
/// recomputing at twice the truncation.
pub fn tau(source: &impl PointSource, g: &GammaElement) -> Result<TauEvaluation> {
    let ctx = source.base_context();
    let (value, predeterminant) = tau_at(&source.point_at(ctx.n)?, &g.with_context(ctx)?)?;
    let doubled = ctx.with_n(2 * ctx.n);
    let (value_2n, _) = tau_at(&source.point_at(doubled.n)?, &g.with_context(doubled)?)?;
    Ok(TauEvaluation { stabilization_gap: relative_gap(&value, &value_2n), value, predeterminant })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BakerEvaluation {
    /// `ψ = det Ψ`.
    pub psi: AValue,
    /// `Ψ(g, ζ) = 𝒯(g q_ζ) 𝒯(g)⁻¹`.
    pub predeterminant: AMatrix,
}

pub fn baker(w: &GrassmannPoint, g: &GammaElement, zeta: Complex64) -> Result<BakerEvaluation> {
    let shifted = g.compose(&GammaElement::q(g.ctx, zeta)?)?;
    let (_, t_shifted) = tau_at(w, &shifted)?;
    let (_, t_base) = tau_at(w, g)?;
    let predeterminant = t_base.transpose().solve(&t_shifted.transpose())?.transpose();
    Ok(BakerEvaluation { psi: predeterminant.det()?, predeterminant })
}

/// Miwa shift `t -> t + [z]`, `[z] = (z, z²/2, z³/3, ...)`, retaining at least
/// [`DEFAULT_TIMES`] times and as many more as needed for the tail
/// `|z|^{K+1}/(K+1)` to drop below [`SHIFT_TAIL`].
pub fn shift_times(g: &GammaElement, z: Complex64) -> Result<GammaElement> {
    let r = z.norm();
    if r >= 1.0 || !r.is_finite() {
        return Err(Error::ShiftOutOfRange(r));
    }
    if r == 0.0 {
        return Ok(g.clone());
    }
    let mut k_max = g.times.len().max(DEFAULT_TIMES);
    while r.powi(k_max as i32 + 1) / (k_max as f64 + 1.0) >= SHIFT_TAIL {
        k_max += 1;
    }
    let m = g.ctx.m;
    let mut times = g.times.clone();
    times.resize(k_max, AValue::zero(m));
    let mut power = Complex64::new(1.0, 0.0);
    for (k, t) in times.iter_mut().enumerate() {
        power *= z;
        *t = &*t + &AValue::splat(m, power / (k + 1) as f64);
    }
    Ok(GammaElement { times, factors: g.factors.clone(), ctx: g.ctx })
}

/// Central mixed difference of `log|f|`:
/// `[L(h,h) - L(h,-h) - L(-h,h) + L(-h,-h)] / (4h²)`, divided by `2π`.
pub fn mixed_log_difference(f: impl Fn(f64, f64) -> Result<AValue>, h: f64) -> Result<AValue> {
    mixed_difference(|e, d| Ok(f(e, d)?.fibers().iter().map(|z| z.norm().ln()).collect()), h)
}

fn mixed_difference(log_abs: impl Fn(f64, f64) -> Result<Vec<f64>>, h: f64) -> Result<AValue> {
    let pp = log_abs(h, h)?;
    let pm = log_abs(h, -h)?;
    let mp = log_abs(-h, h)?;
    let mm = log_abs(-h, -h)?;
    let fibers = (0..pp.len())
        .map(|k| Complex64::new((pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h) / (2.0 * PI), 0.0))
        .collect();
    AValue::new(fibers)
}

/// `Re log det(I + Y)`. For small `Y` the trace series keeps the rounding
/// proportional to `|Y|` instead of to 1.
fn log_abs_det_near_identity(y: &CMat) -> f64 {
    let n = y.nrows();
    let size = (0..n).map(|i| y.row(i).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    if size > 0.5 {
        let lu = Lu::factor(&(CMat::identity(n, n) + y));
        return lu.det().norm().ln();
    }
    let mut power = y.clone();
    let mut sum = 0.0;
    let mut bound = size;
    for k in 1.. {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * power.trace().re / k as f64;
        bound *= size;
        if bound * n as f64 <= 1e-18 * sum.abs().max(f64::MIN_POSITIVE) || bound * n as f64 <= 1e-300 || k >= 200 {
            break;
        }
        power = &power * y;
    }
    sum
}

fn unit_direction(x: &AMatrix) -> AMatrix {
    let norm = x.norm_inf();
    if norm == 0.0 {
        x.clone()
    } else {
        x.scale(Complex64::new(1.0 / norm, 0.0))
    }
}

/// Curvature coefficient `(1/2π) ∂₊∂₋ log|τ(W, g)|`, where `∂₊` moves the frame
/// by `I + ε [[0, X₊], [0, 0]]` (the "-" to "+" block) and `∂₋` by
/// `I + δ [[0, 0], [X₋, 0]]` (the "+" to "-" block).
///
/// The top block of `g⁻¹ (I + εU)(I + δD) F` is `A₀ + εA₁ + δA₂ + εδA₃`, so
/// `det(A(ε, δ))/det(A₀) = det(I + εX₁ + δX₂ + εδX₃)` with `X_i = A₀⁻¹A_i`.
/// The same holds for the top block of the deformed frame itself, and the
/// difference is taken on the log of the quotient of the two ratios.
pub fn log_potential_coefficient(
    w: &GrassmannPoint,
    g: &GammaElement,
    dir_plus: &AMatrix,
    dir_minus: &AMatrix,
    h: f64,
) -> Result<AValue> {
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::InvalidInput(format!("step h = {h} outside [1e-6, 1e-2]")));
    }
    if w.context() != g.ctx {
        return Err(Error::DimensionMismatch(format!("point in {:?}, flow element in {:?}", w.context(), g.ctx)));
    }
    let ctx = w.context();
    let n = ctx.n;
    for d in [dir_plus, dir_minus] {
        if d.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("direction must be {n} x {n}")));
        }
        d.fiber_count_matches(ctx.m)?;
    }
    let zero = AMatrix::zeros(ctx.m, n, n);
    let upper = AMatrix::from_blocks(&zero, &unit_direction(dir_plus), &zero, &zero)?;
    let lower = AMatrix::from_blocks(&zero, &zero, &unit_direction(dir_minus), &zero)?;
    let upper_f = upper.matmul(w.frame())?;
    let lower_f = lower.matmul(w.frame())?;
    let both_f = upper.matmul(&lower_f)?;
    // X₁, X₂, X₃ for the top block of `pre · (I + εU)(I + δD) F`
    let expand = |pre: Option<&AMatrix>| -> Result<[AMatrix; 3]> {
        let top = |x: &AMatrix| -> Result<AMatrix> {
            match pre {
                Some(p) => p.matmul(x)?.block(0, 0, n, n),
                None => x.block(0, 0, n, n),
            }
        };
        let a0 = top(w.frame())?;
        require_nonsingular(&a0, || "top block is singular along the deformation".into())?;
        Ok([a0.solve(&top(&upper_f)?)?, a0.solve(&top(&lower_f)?)?, a0.solve(&top(&both_f)?)?])
    };
    let flow = gamma_matrix(&g.inverse());
    let numerator = expand(Some(&flow))?;
    let denominator = expand(None)?;
    let log_ratio = |eps: f64, delta: f64| -> Result<Vec<f64>> {
        let (e, d) = (Complex64::new(eps, 0.0), Complex64::new(delta, 0.0));
        let side = |x: &[AMatrix; 3], k: usize| {
            log_abs_det_near_identity(&(x[0].fiber(k) * e + x[1].fiber(k) * d + x[2].fiber(k) * (e * d)))
        };
        Ok((0..ctx.m).map(|k| side(&numerator, k) - side(&denominator, k)).collect())
    };
    mixed_difference(log_ratio, h)
}

/// Coefficients at `h`, `h/2`, `h/4` and the per-fiber Richardson ratio
/// `(c(h) - c(h/2)) / (c(h/2) - c(h/4))`, which tends to 4 for a second-order
/// difference.
#[derive(Clone, Debug)]
pub struct LogPotentialConvergence {
    pub coefficients: [AValue; 3],
    pub ratios: Vec<f64>,
}

pub fn log_potential_convergence(
    w: &GrassmannPoint,
    g: &GammaElement,
    dir_plus: &AMatrix,
    dir_minus: &AMatrix,
    h: f64,
) -> Result<LogPotentialConvergence> {
    let c0 = log_potential_coefficient(w, g, dir_plus, dir_minus, h)?;
    let c1 = log_potential_coefficient(w, g, dir_plus, dir_minus, h / 2.0)?;
    let c2 = log_potential_coefficient(w, g, dir_plus, dir_minus, h / 4.0)?;
    let ratios = (0..c0.m())
        .map(|k| (c0.fiber(k).re - c1.fiber(k).re) / (c1.fiber(k).re - c2.fiber(k).re))
        .collect();
    Ok(LogPotentialConvergence { coefficients: [c0, c1, c2], ratios })
}

/// Smallest pivot magnitude of `top(g⁻¹W)` relative to its largest, per fiber.
pub fn transversality_margin(w: &GrassmannPoint, g: &GammaElement) -> Result<Vec<f64>> {
    let moved = act(g, w)?.top();
    Ok(moved
        .fibers()
        .iter()
        .map(|f| {
            let lu = Lu::factor(f);
            lu.min_pivot() / lu.max_pivot().max(f64::MIN_POSITIVE)
        })
        .collect())
}

/// One grid point and fiber of a tau sweep over real times.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub times: Vec<f64>,
    pub fiber: usize,
    pub tau: Complex64,
    /// Relative change of this grid point's tau (all fibers) at doubled `N`.
    pub stabilization_gap: f64,
}

/// Evaluates tau on the product grid of the axes (one axis per time), in
/// lexicographic grid order with the first axis slowest, then by fiber.
pub fn tau_grid(source: &impl PointSource, axes: &[Vec<f64>]) -> Result<Vec<GridRow>> {
    if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
        return Err(Error::InvalidInput("every grid axis needs at least one value".into()));
    }
    let ctx = source.base_context();
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut rows = Vec::with_capacity(total * ctx.m);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        let times: Vec<f64> = idx.iter().zip(axes).map(|(&i, a)| a[i]).collect();
        let complex: Vec<Complex64> = times.iter().map(|&t| Complex64::new(t, 0.0)).collect();
        let eval = tau(source, &GammaElement::from_times(ctx, &complex))?;
        for (fiber, &value) in eval.value.fibers().iter().enumerate() {
            rows.push(GridRow { times: times.clone(), fiber, tau: value, stabilization_gap: eval.stabilization_gap });
        }
        for d in (0..axes.len()).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(rows)
}

/// CSV with header `t1,...,tK,fiber,re_tau,im_tau`.
pub fn write_tau_csv(rows: &[GridRow], out: &mut impl std::io::Write) -> std::io::Result<()> {
    let k = rows.first().map_or(0, |r| r.times.len());
    let mut header: Vec<String> = (1..=k).map(|i| format!("t{i}")).collect();
    header.extend(["fiber", "re_tau", "im_tau"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut fields: Vec<String> = r.times.iter().map(|t| t.to_string()).collect();
        fields.push(r.fiber.to_string());
        fields.push(r.tau.re.to_string());
        fields.push(r.tau.im.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::graph_of;
    use crate::opalgebra::c64;
    use crate::rng::SeededRng;

    fn ctx(n: usize, m: usize) -> TruncationContext {
        TruncationContext::new(n, m).unwrap()
    }

    /// `1 + c/(p-q) · (1 - f(p)/f(q))` with `f = exp(Σ t_k z^k) Π (1 - z w_j)⁻¹`:
    /// the determinant-lemma value of the rank-one graph as `N -> ∞`.
    fn one_soliton_closed_form(s: Soliton, times: &[Complex64], shifts: &[Complex64]) -> Complex64 {
        let f = |x: Complex64| {
            let mut e = Complex64::new(0.0, 0.0);
            for (k, t) in times.iter().enumerate() {
                e += t * x.powi(k as i32 + 1);
            }
            shifts.iter().fold(e.exp(), |acc, w| acc / (1.0 - w * x))
        };
        1.0 + s.c / (s.p - s.q) * (1.0 - f(s.p) / f(s.q))
    }

    #[test]
    fn identity_symbol_gives_identity_matrix() {
        let c = ctx(3, 2);
        assert_eq!(gamma_matrix(&GammaElement::identity(c)), AMatrix::identity(2, 6));
    }

    #[test]
    fn single_time_gives_exponential_series() {
        let c = ctx(3, 1);
        let t1 = c64(0.7, -0.2);
        let m = gamma_matrix(&GammaElement::from_times(c, &[t1]));
        for r in 0..6 {
            for s in 0..6 {
                let gap = c.lattice_index(r) - c.lattice_index(s);
                let expect = if gap >= 0 {
                    t1.powi(gap as i32) / (1..=gap).product::<i64>().max(1) as f64
                } else {
                    c64(0.0, 0.0)
                };
                assert!((m.fiber(0)[(r, s)] - expect).norm() <= 1e-15, "{r} {s}");
            }
        }
    }

    #[test]
    fn q_zeta_matrix() {
        let c = ctx(3, 1);
        let zeta = c64(1.5, 0.5);
        let m = gamma_matrix(&GammaElement::q(c, zeta).unwrap());
        for r in 0..6 {
            for s in 0..6 {
                let gap = c.lattice_index(r) - c.lattice_index(s);
                let expect = match gap {
                    0 => c64(1.0, 0.0),
                    1 => -zeta.inv(),
                    _ => c64(0.0, 0.0),
                };
                assert!((m.fiber(0)[(r, s)] - expect).norm() <= 1e-16);
            }
        }
    }

    #[test]
    fn rational_factor_inside_disk_is_rejected() {
        let c = ctx(2, 1);
        assert!(matches!(GammaElement::q(c, c64(0.5, 0.0)), Err(Error::SymbolDomain(_))));
        assert!(matches!(GammaElement::q(c, c64(1.0, 0.0)), Err(Error::SymbolDomain(_))));
    }

    #[test]
    fn toeplitz_product_is_exact_group_law() {
        let mut rng = SeededRng::new(31);
        let c = ctx(4, 2);
        let g1 = GammaElement::new(c, (0..3).map(|_| rng.avalue(2)).collect(), vec![]).unwrap();
        let g2 = GammaElement::q(c, rng.in_annulus(1.5, 3.0)).unwrap();
        let lhs = gamma_matrix(&g1).matmul(&gamma_matrix(&g2)).unwrap();
        let rhs = gamma_matrix(&g1.compose(&g2).unwrap());
        assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-13);
    }

    #[test]
    fn action_cases() {
        let mut rng = SeededRng::new(32);
        let c = ctx(4, 2);
        let w = graph_of(&rng.small(2, 4, 4, 0.5)).unwrap();
        assert_eq!(act(&GammaElement::identity(c), &w).unwrap(), w);

        let g1 = GammaElement::new(c, (0..3).map(|_| rng.avalue(2)).collect(), vec![]).unwrap();
        let g2 = GammaElement::q(c, c64(2.0, 0.0)).unwrap();
        let lhs = act(&g1, &act(&g2, &w).unwrap()).unwrap();
        let rhs = act(&g1.compose(&g2).unwrap(), &w).unwrap();
        assert!(lhs.frame().sub(rhs.frame()).unwrap().max_abs() <= 1e-10);

        let moved = act(&GammaElement::q(c, c64(1.1, 0.3)).unwrap(), &GrassmannPoint::reference_plus(c)).unwrap();
        assert!(moved.is_transverse());
    }

    #[test]
    fn reference_point_has_unit_tau() {
        let mut rng = SeededRng::new(33);
        let c = ctx(5, 2);
        let h_plus = GrassmannPoint::reference_plus(c);
        for _ in 0..5 {
            let g = GammaElement::new(
                c,
                (0..4).map(|_| rng.avalue(2)).collect(),
                vec![RationalFactor { zeta: rng.in_annulus(1.2, 2.0), exponent: -1 }],
            )
            .unwrap();
            let t = tau(&h_plus, &g).unwrap();
            for z in t.value.fibers() {
                assert!((z - c64(1.0, 0.0)).norm() <= 1e-12, "{z}");
            }
            assert!(t.stabilization_gap <= 1e-12);
        }
    }

    #[test]
    fn tau_of_identity_is_one() {
        let mut rng = SeededRng::new(34);
        let c = ctx(4, 2);
        let w = graph_of(&rng.amatrix(2, 4, 4)).unwrap();
        let t = tau(&w, &GammaElement::identity(c)).unwrap();
        for z in t.value.fibers() {
            assert!((z - c64(1.0, 0.0)).norm() <= 1e-12);
        }
    }

    #[test]
    fn one_soliton_matches_closed_form() {
        let sol = Soliton { p: c64(0.5, 0.1), q: c64(-0.3, 0.2), c: c64(0.8, 0.0) };
        let point = SolitonPoint::new(16, vec![vec![sol]]).unwrap();
        let times = [c64(0.3, 0.0), c64(-0.2, 0.1), c64(0.15, 0.0)];
        let g = GammaElement::from_times(point.base_context(), &times);
        let t = tau(&point, &g).unwrap();
        let expect = one_soliton_closed_form(sol, &times, &[]);
        let got = t.value.fiber(0);
        assert!((got - expect).norm() <= 1e-8 * expect.norm(), "{got} vs {expect}");
        assert!(t.stabilization_gap <= 1e-8);
        let det = t.predeterminant.det().unwrap().fiber(0);
        assert!((det - got).norm() <= 1e-10 * got.norm());
    }

    #[test]
    fn fibers_factor_into_scalar_runs() {
        let s1 = Soliton { p: c64(0.4, 0.0), q: c64(-0.2, 0.0), c: c64(1.0, 0.0) };
        let s2 = Soliton { p: c64(-0.3, 0.2), q: c64(0.5, -0.1), c: c64(0.6, 0.3) };
        let both = SolitonPoint::new(8, vec![vec![s1], vec![s2]]).unwrap();
        let times = [c64(0.2, 0.0), c64(0.1, 0.0)];
        let t = tau(&both, &GammaElement::from_times(both.base_context(), &times)).unwrap();
        for (k, s) in [s1, s2].into_iter().enumerate() {
            let single = SolitonPoint::new(8, vec![vec![s]]).unwrap();
            let ts = tau(&single, &GammaElement::from_times(single.base_context(), &times)).unwrap();
            assert_eq!(ts.value.fiber(0), t.value.fiber(k));
        }
    }

    #[test]
    fn tau_is_frame_invariant() {
        let mut rng = SeededRng::new(35);
        let c = ctx(4, 2);
        let w = graph_of(&rng.small(2, 4, 4, 0.8)).unwrap();
        let g = GammaElement::new(c, (0..3).map(|_| rng.avalue(2)).collect(), vec![]).unwrap();
        let k = rng.well_conditioned(2, 4);
        let a = tau_at(&w, &g).unwrap().0;
        let b = tau_at(&w.reframe(&k).unwrap(), &g).unwrap().0;
        for (x, y) in a.fibers().iter().zip(b.fibers()) {
            assert!((x - y).norm() <= 1e-10 * x.norm());
        }
    }

    #[test]
    fn non_transverse_point_is_rejected() {
        let c = ctx(2, 1);
        let w = GrassmannPoint::reference_minus(c);
        assert!(matches!(tau_at(&w, &GammaElement::identity(c)), Err(Error::TransversalityLost(_))));
    }

    #[test]
    fn baker_cases() {
        let c = ctx(6, 1);
        let g = GammaElement::from_times(c, &[c64(0.3, 0.0), c64(0.1, 0.0)]);
        let b = baker(&GrassmannPoint::reference_plus(c), &g, c64(2.0, 1.0)).unwrap();
        assert!((b.psi.fiber(0) - c64(1.0, 0.0)).norm() <= 1e-12);

        let sol = Soliton { p: c64(0.5, 0.0), q: c64(-0.4, 0.1), c: c64(0.7, 0.0) };
        let point = SolitonPoint::new(16, vec![vec![sol]]).unwrap();
        let w = point.point_at(16).unwrap();
        let c = point.base_context();
        let times = [c64(0.3, 0.0), c64(-0.1, 0.0)];
        let g = GammaElement::from_times(c, &times);
        let zeta = c64(1.7, -0.4);
        let b = baker(&w, &g, zeta).unwrap();
        let tau_g = tau_at(&w, &g).unwrap().0.fiber(0);
        let tau_gq = tau_at(&w, &g.compose(&GammaElement::q(c, zeta).unwrap()).unwrap()).unwrap().0.fiber(0);
        assert!((b.psi.fiber(0) * tau_g - tau_gq).norm() <= 1e-10 * tau_gq.norm());
        let f = |x: Complex64| (times[0] * x + times[1] * x * x).exp() * (1.0 - x / zeta);
        let closed = |ff: &dyn Fn(Complex64) -> Complex64| 1.0 + sol.c / (sol.p - sol.q) * (1.0 - ff(sol.p) / ff(sol.q));
        let f0 = |x: Complex64| (times[0] * x + times[1] * x * x).exp();
        let ratio = closed(&f) / closed(&f0);
        assert!((b.psi.fiber(0) - ratio).norm() <= 1e-8 * ratio.norm(), "{} vs {}", b.psi.fiber(0), ratio);
    }

    #[test]
    fn shift_cases() {
        let c = ctx(8, 1);
        let g = GammaElement::from_times(c, &[c64(0.1, 0.0)]);
        assert_eq!(shift_times(&g, c64(0.0, 0.0)).unwrap(), g);
        assert!(matches!(shift_times(&g, c64(1.0, 0.0)), Err(Error::ShiftOutOfRange(_))));
        let shifted = shift_times(&g, c64(0.3, 0.0)).unwrap();
        assert!(shifted.times().len() >= DEFAULT_TIMES);
        assert!((shifted.times()[1].fiber(0) - c64(0.045, 0.0)).norm() <= 1e-16);
    }

    #[test]
    fn shift_equals_inverse_q_multiplication() {
        let sol = Soliton { p: c64(0.5, 0.0), q: c64(-0.3, 0.0), c: c64(0.7, 0.0) };
        let point = SolitonPoint::new(16, vec![vec![sol]]).unwrap();
        let c = point.base_context();
        let w = point.point_at(16).unwrap();
        let g = GammaElement::from_times(c, &[c64(0.2, 0.0), c64(0.1, 0.0)]);
        for z in [c64(0.3, 0.0), c64(-0.1, 0.25), c64(0.0, -0.3)] {
            let by_shift = tau_at(&w, &shift_times(&g, z).unwrap()).unwrap().0.fiber(0);
            let q_inv = GammaElement::new(c, vec![], vec![RationalFactor { zeta: z.inv(), exponent: -1 }]).unwrap();
            let by_q = tau_at(&w, &g.compose(&q_inv).unwrap()).unwrap().0.fiber(0);
            assert!((by_shift - by_q).norm() <= 1e-8 * by_q.norm());
            let undo = shift_times(&GammaElement::identity(c), z).unwrap().inverse();
            let back = shift_times(&g, z).unwrap().compose(&undo).unwrap();
            let restored = tau_at(&w, &back).unwrap().0.fiber(0);
            let base = tau_at(&w, &g).unwrap().0.fiber(0);
            assert!((restored - base).norm() <= 1e-10 * base.norm());
        }
    }

    #[test]
    fn mixed_difference_of_toy_function() {
        let toy = |e: f64, d: f64| Ok(AValue::splat(1, c64(1.0 + e * d, 0.0)));
        let v = mixed_log_difference(toy, 1e-3).unwrap().fiber(0).re;
        assert!((v - 1.0 / (2.0 * PI)).abs() <= 1e-6, "{v}");
    }

    #[test]
    fn log_potential_vanishes_without_lower_deformation() {
        let mut rng = SeededRng::new(36);
        let c = ctx(4, 1);
        let g = GammaElement::from_times(c, &[c64(0.3, 0.0), c64(0.2, 0.0)]);
        let v = log_potential_coefficient(
            &GrassmannPoint::reference_plus(c),
            &g,
            &rng.amatrix(1, 4, 4),
            &AMatrix::zeros(1, 4, 4),
            1e-3,
        )
        .unwrap();
        assert!(v.fiber(0).norm() <= 1e-6);
    }

    #[test]
    fn log_potential_converges_quadratically() {
        let mut rng = SeededRng::new(37);
        let sol = Soliton { p: c64(0.5, 0.0), q: c64(-0.3, 0.0), c: c64(0.9, 0.0) };
        let point = SolitonPoint::new(8, vec![vec![sol]]).unwrap();
        let w = point.point_at(8).unwrap();
        let g = GammaElement::from_times(point.base_context(), &[c64(0.4, 0.0), c64(0.2, 0.0), c64(0.1, 0.0)]);
        let conv = log_potential_convergence(&w, &g, &rng.amatrix(1, 8, 8), &rng.amatrix(1, 8, 8), 1e-2).unwrap();
        assert!((conv.ratios[0] - 4.0).abs() <= 0.5, "{:?}", conv.ratios);
    }

    #[test]
    fn grid_order_and_csv() {
        let sol = Soliton { p: c64(0.4, 0.0), q: c64(-0.2, 0.0), c: c64(0.5, 0.0) };
        let point = SolitonPoint::new(8, vec![vec![sol], vec![sol]]).unwrap();
        let rows = tau_grid(&point, &[vec![0.0, 0.1], vec![-0.2, 0.0, 0.2]]).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].times, vec![0.0, -0.2]);
        assert_eq!(rows[1].fiber, 1);
        assert_eq!(rows[2].times, vec![0.0, 0.0]);
        assert_eq!(rows[6].times, vec![0.1, -0.2]);
        assert_eq!(rows[0].tau, rows[1].tau);
        let mut buf = Vec::new();
        write_tau_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t1,t2,fiber,re_tau,im_tau\n0,-0.2,0,"));
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn log_ratio_matches_direct_determinants() {
        let mut rng = SeededRng::new(38);
        let sol = Soliton { p: c64(0.45, 0.1), q: c64(-0.3, 0.05), c: c64(0.7, 0.2) };
        let point = SolitonPoint::new(6, vec![vec![sol]]).unwrap();
        let w = point.point_at(6).unwrap();
        let g = GammaElement::from_times(point.base_context(), &[c64(0.2, 0.1), c64(-0.1, 0.0)]);
        let (xp, xm) = (rng.amatrix(1, 6, 6), rng.amatrix(1, 6, 6));
        let h = 1e-2;
        let zero = AMatrix::zeros(1, 6, 6);
        let up = AMatrix::from_blocks(&zero, &xp.scale(c64(1.0 / xp.norm_inf(), 0.0)), &zero, &zero).unwrap();
        let down = AMatrix::from_blocks(&zero, &zero, &xm.scale(c64(1.0 / xm.norm_inf(), 0.0)), &zero).unwrap();
        let one = AMatrix::identity(1, 12);
        let direct = mixed_log_difference(
            |e, d| {
                let moved = one.add(&up.scale(c64(e, 0.0))).unwrap().matmul(&one.add(&down.scale(c64(d, 0.0))).unwrap()).unwrap();
                Ok(tau_at(&GrassmannPoint::new(moved.matmul(w.frame()).unwrap()).unwrap(), &g)?.0)
            },
            h,
        )
        .unwrap();
        let series = log_potential_coefficient(&w, &g, &xp, &xm, h).unwrap();
        assert!((direct.fiber(0) - series.fiber(0)).norm() <= 1e-8, "{direct:?} {series:?}");
    }
}
