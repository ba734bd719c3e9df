//! Batch driver: one subcommand per computation, JSON configuration in,
//! JSON or CSV results out.
//!
//! Exit codes: 0 when every checked residual is within tolerance, 2 when one is
//! not, 1 for usage, input and validation errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::crossratio::{coordinatize_graphs, cross_pol, tau_block};
use crate::error::{Error, Result};
use crate::grassmann::{GrassmannPoint, MatrixDocument, TruncationContext};
use crate::kpcheck::{
    baker_coefficients, lax_from_dressing, lax_residual, minus_part, plus_part, psdo_mul, trisecant_residual,
    zero_curvature_residual, Basis, DressingSampling, Poly, PsdoSymbol, ResidualReport, Window,
};
use crate::opalgebra::{c64, AMatrix, AValue, Complex64, MatrixJson};
use crate::rng::SeededRng;
use crate::schwarzian::{expansion_check_ordered, mobius_curve_at, schwarzian_at, MatrixCurve, SlotOrder};
use crate::tauflow::{
    baker, log_potential_convergence, shift_times, tau, tau_at, tau_grid, write_tau_csv, GammaElement, PointSource,
    Soliton, SolitonPoint,
};
use crate::wick::{
    cauchy_determinant, fay_residual_g0, fay_residual_g1, quasi_periodicity_residual, wick_determinant,
    EllipticData, Kernel,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_RESIDUAL: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "tau-lab", version, about = "Operator-valued tau functions at finite truncation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized sweeps
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (standard output when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override of the configured tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of fibers; single-fiber data is replicated to this count
    #[arg(long, global = true)]
    fibers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Tau on a grid of real times, as CSV
    Tau,
    /// Baker function and its relation to shifted tau
    Baker,
    /// Three-term trisecant residuals
    Trisecant,
    /// Lax and zero-curvature residuals of the dressed operator
    Kp,
    /// Schwarzian and cross-ratio expansion of a matrix curve
    Schwarzian,
    /// Genus-0 and genus-1 Wick determinants, Fay and theta checks
    Wick,
    /// Mixed log-difference of |tau| with its Richardson ratio
    Curvature,
    /// Seeded invariant suite
    Selftest,
}

struct Outcome {
    text: String,
    passed: bool,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    if let Some(tol) = cli.tol {
        if !(tol.is_finite() && tol >= 0.0) {
            eprintln!("error: --tol must be a finite non-negative number");
            return EXIT_INPUT;
        }
    }
    if cli.fibers == Some(0) {
        eprintln!("error: --fibers must be at least 1");
        return EXIT_INPUT;
    }
    let outcome = match dispatch(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &outcome.text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{}", outcome.text);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    if outcome.passed {
        EXIT_PASS
    } else {
        eprintln!("residual check failed");
        EXIT_RESIDUAL
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match cli.command {
        Command::Selftest => selftest(cli.seed.unwrap_or(0), cli.fibers.unwrap_or(2)),
        Command::Tau => run_tau(load(cli)?, cli),
        Command::Baker => run_baker(load(cli)?, cli),
        Command::Trisecant => run_trisecant(load(cli)?, cli),
        Command::Kp => run_kp(load(cli)?, cli),
        Command::Schwarzian => run_schwarzian(load(cli)?, cli),
        Command::Wick => run_wick(load(cli)?, cli),
        Command::Curvature => run_curvature(load(cli)?, cli),
    }
}

fn load<T: DeserializeOwned>(cli: &Cli) -> Result<T> {
    let path = cli.config.as_deref().ok_or_else(|| Error::InvalidInput("--config is required".into()))?;
    parse_config(path)
}

fn parse_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    // NaN counts as a failure, so it must survive the fold
    values.into_iter().fold(0.0, |acc, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) })
}

fn within(value: f64, tol: f64) -> bool {
    value <= tol
}

// ---------------------------------------------------------------------------
// points

/// Grassmannian point of a configuration.
#[derive(Deserialize, Debug, Clone)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum PointConfig {
    /// `H₊` with `m` fibers.
    Reference { m: usize },
    /// Soliton data, one list per fiber.
    Solitons(Vec<Vec<Soliton>>),
    /// Explicit frame of shape `2N x N`.
    Frame(Box<MatrixDocument>),
}

enum Source {
    Fixed(GrassmannPoint),
    Solitons(SolitonPoint),
}

impl PointSource for Source {
    fn base_context(&self) -> TruncationContext {
        match self {
            Source::Fixed(w) => w.base_context(),
            Source::Solitons(s) => s.base_context(),
        }
    }

    fn point_at(&self, n: usize) -> Result<GrassmannPoint> {
        match self {
            Source::Fixed(w) => w.point_at(n),
            Source::Solitons(s) => s.point_at(n),
        }
    }
}

fn replicate<T: Clone>(items: Vec<T>, fibers: Option<usize>) -> Result<Vec<T>> {
    match fibers {
        None => Ok(items),
        Some(m) if items.len() == m => Ok(items),
        Some(m) if items.len() == 1 => Ok(vec![items[0].clone(); m]),
        Some(m) => Err(Error::InvalidInput(format!("config has {} fibers, --fibers asks for {m}", items.len()))),
    }
}

fn replicate_matrix(x: AMatrix, fibers: Option<usize>) -> Result<AMatrix> {
    AMatrix::new(replicate(x.fibers().to_vec(), fibers)?)
}

fn build_source(n: usize, point: &PointConfig, fibers: Option<usize>) -> Result<Source> {
    match point {
        PointConfig::Reference { m } => {
            let ctx = TruncationContext::new(n, fibers.unwrap_or(*m))?;
            Ok(Source::Fixed(GrassmannPoint::reference_plus(ctx)))
        }
        PointConfig::Solitons(list) => Ok(Source::Solitons(SolitonPoint::new(n, replicate(list.clone(), fibers)?)?)),
        PointConfig::Frame(doc) => {
            if doc.n != n {
                return Err(Error::InvalidInput(format!("frame has N = {}, config has N = {n}", doc.n)));
            }
            let w = doc.to_point()?;
            Ok(Source::Fixed(GrassmannPoint::new(replicate_matrix(w.frame().clone(), fibers)?)?))
        }
    }
}

fn check_times(times: &[Complex64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("times must be finite".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct FiberResidual {
    fiber: usize,
    residual: f64,
}

fn fiber_residuals(r: &[f64]) -> Vec<FiberResidual> {
    r.iter().enumerate().map(|(fiber, &residual)| FiberResidual { fiber, residual }).collect()
}

// ---------------------------------------------------------------------------
// tau

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct TauConfig {
    #[serde(rename = "N")]
    n: usize,
    point: PointConfig,
    /// One axis of real values per time `t_1 .. t_K`.
    grid: Vec<Vec<f64>>,
    /// Bound on the relative change of tau when `N` is doubled.
    #[serde(default = "default_tau_tol")]
    tol: f64,
}

fn default_tau_tol() -> f64 {
    1e-8
}

fn run_tau(cfg: TauConfig, cli: &Cli) -> Result<Outcome> {
    if cfg.grid.iter().flatten().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("grid values must be finite".into()));
    }
    let source = build_source(cfg.n, &cfg.point, cli.fibers)?;
    let rows = tau_grid(&source, &cfg.grid)?;
    let mut buf = Vec::new();
    write_tau_csv(&rows, &mut buf).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let tol = cli.tol.unwrap_or(cfg.tol);
    let gap = max_of(rows.iter().map(|r| r.stabilization_gap));
    if !within(gap, tol) {
        eprintln!("stabilization gap {gap:e} exceeds {tol:e}");
    }
    Ok(Outcome { text: String::from_utf8(buf).expect("CSV is ASCII"), passed: within(gap, tol) })
}

// ---------------------------------------------------------------------------
// baker

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct BakerConfig {
    #[serde(rename = "N")]
    n: usize,
    point: PointConfig,
    #[serde(default)]
    times: Vec<Complex64>,
    zetas: Vec<Complex64>,
    #[serde(default = "default_baker_tol")]
    tol: f64,
}

fn default_baker_tol() -> f64 {
    1e-10
}

#[derive(Serialize)]
struct BakerEntry {
    zeta: Complex64,
    fiber: usize,
    psi: Complex64,
    /// `|ψ τ(g) - τ(g q_ζ)| / |τ(g q_ζ)|`
    residual: f64,
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    entries: Vec<T>,
    max_residual: f64,
    tol: f64,
    passed: bool,
}

impl<T: Serialize> Report<T> {
    fn new(entries: Vec<T>, residuals: impl IntoIterator<Item = f64>, tol: f64) -> Self {
        let max_residual = max_of(residuals);
        Report { entries, max_residual, tol, passed: within(max_residual, tol) }
    }

    fn outcome(self) -> Result<Outcome> {
        Ok(Outcome { passed: self.passed, text: to_json(&self)? })
    }
}

fn run_baker(cfg: BakerConfig, cli: &Cli) -> Result<Outcome> {
    check_times(&cfg.times)?;
    let source = build_source(cfg.n, &cfg.point, cli.fibers)?;
    let ctx = source.base_context();
    let w = source.point_at(ctx.n)?;
    let g = GammaElement::from_times(ctx, &cfg.times);
    let (tau_g, _) = tau_at(&w, &g)?;
    let mut entries = Vec::new();
    for &zeta in &cfg.zetas {
        let psi = baker(&w, &g, zeta)?.psi;
        let (tau_q, _) = tau_at(&w, &g.compose(&GammaElement::q(ctx, zeta)?)?)?;
        for fiber in 0..ctx.m {
            let (p, tg, tq) = (psi.fiber(fiber), tau_g.fiber(fiber), tau_q.fiber(fiber));
            let residual = (p * tg - tq).norm() / tq.norm();
            entries.push(BakerEntry { zeta, fiber, psi: p, residual });
        }
    }
    let residuals: Vec<f64> = entries.iter().map(|e| e.residual).collect();
    Report::new(entries, residuals, cli.tol.unwrap_or(cfg.tol)).outcome()
}

// ---------------------------------------------------------------------------
// trisecant

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct TrisecantConfig {
    #[serde(rename = "N")]
    n: usize,
    point: PointConfig,
    #[serde(default)]
    times: Vec<Complex64>,
    quadruples: Vec<[Complex64; 4]>,
    #[serde(default = "default_trisecant_tol")]
    tol: f64,
}

fn default_trisecant_tol() -> f64 {
    1e-8
}

#[derive(Serialize)]
struct TrisecantEntry {
    quadruple: usize,
    fiber: usize,
    sum: Complex64,
    relative: f64,
}

fn run_trisecant(cfg: TrisecantConfig, cli: &Cli) -> Result<Outcome> {
    check_times(&cfg.times)?;
    let source = build_source(cfg.n, &cfg.point, cli.fibers)?;
    let ctx = source.base_context();
    let w = source.point_at(ctx.n)?;
    let g = GammaElement::from_times(ctx, &cfg.times);
    let mut entries = Vec::new();
    for (quadruple, &z) in cfg.quadruples.iter().enumerate() {
        let r = trisecant_residual(&w, &g, z)?;
        for fiber in 0..ctx.m {
            entries.push(TrisecantEntry { quadruple, fiber, sum: r.sum.fiber(fiber), relative: r.relative[fiber] });
        }
    }
    let residuals: Vec<f64> = entries.iter().map(|e| e.relative).collect();
    Report::new(entries, residuals, cli.tol.unwrap_or(cfg.tol)).outcome()
}

// ---------------------------------------------------------------------------
// kp

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct KpConfig {
    #[serde(rename = "N")]
    n: usize,
    point: PointConfig,
    #[serde(default)]
    window: Window,
    #[serde(default)]
    sampling: DressingSampling,
    /// Flow indices `k` for `∂_k L = [(L^k)_+, L]`.
    #[serde(default = "default_lax")]
    lax: Vec<usize>,
    /// Pairs `(k, j)` for the zero-curvature equations.
    #[serde(default = "default_zero_curvature")]
    zero_curvature: Vec<[usize; 2]>,
    #[serde(default = "default_kp_tol")]
    tol: f64,
}

fn default_lax() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_zero_curvature() -> Vec<[usize; 2]> {
    vec![[2, 3]]
}

fn default_kp_tol() -> f64 {
    1e-6
}

/// Number of flow times carried by the Taylor basis.
const KP_TIMES: usize = 3;

#[derive(Serialize)]
struct KpEntry {
    check: &'static str,
    flows: Vec<usize>,
    residual: Vec<FiberResidual>,
    relative: f64,
    window: Window,
}

fn kp_entry(check: &'static str, flows: Vec<usize>, r: &ResidualReport) -> KpEntry {
    KpEntry { check, flows, residual: fiber_residuals(&r.residual), relative: r.relative, window: r.window }
}

fn run_kp(cfg: KpConfig, cli: &Cli) -> Result<Outcome> {
    let source = build_source(cfg.n, &cfg.point, cli.fibers)?;
    let w = source.point_at(cfg.n)?;
    let basis = Basis::new(KP_TIMES, cfg.window.d);
    let coeffs = baker_coefficients(&w, &basis, cfg.window.depth, cfg.sampling)?;
    let l = lax_from_dressing(&coeffs, cfg.window)?;
    let mut entries = Vec::new();
    let mut worst = Vec::new();
    for &k in &cfg.lax {
        let r = lax_residual(&l, k)?;
        worst.push(r.max_residual());
        entries.push(kp_entry("lax", vec![k], &r));
    }
    for &[k, j] in &cfg.zero_curvature {
        let r = zero_curvature_residual(&l, k, j)?;
        worst.push(r.max_residual());
        entries.push(kp_entry("zero_curvature", vec![k, j], &r));
    }
    Report::new(entries, worst, cli.tol.unwrap_or(cfg.tol)).outcome()
}

// ---------------------------------------------------------------------------
// schwarzian

#[derive(Deserialize, Debug)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum CurveConfig {
    /// `Σ_k C_k (s - center)^k`.
    Polynomial {
        coeffs: Vec<MatrixJson>,
        #[serde(default)]
        center: Complex64,
    },
    /// Taylor polynomial of `(As + B)(Cs + D)⁻¹` about `center`.
    Mobius {
        a: MatrixJson,
        b: MatrixJson,
        c: MatrixJson,
        d: MatrixJson,
        degree: usize,
        #[serde(default)]
        center: Complex64,
    },
}

#[derive(Deserialize, Debug, Clone, Copy, Default)]
#[serde(rename_all = "snake_case")]
enum SlotConfig {
    #[default]
    Classical,
    Literal,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct SchwarzianConfig {
    curve: CurveConfig,
    /// Base point of the expansion.
    w: Complex64,
    /// Directions `a, b, c, d`.
    points: [Complex64; 4],
    /// Step sizes, at least two, decreasing.
    steps: Vec<f64>,
    #[serde(default)]
    slot_order: SlotConfig,
    /// Bound on the gap between fitted and predicted coefficients.
    #[serde(default = "default_schwarzian_tol")]
    tol: f64,
    /// Lowest acceptable observed order of `L(t) - I`.
    #[serde(default)]
    min_order: Option<f64>,
}

fn default_schwarzian_tol() -> f64 {
    1e-4
}

#[derive(Serialize)]
struct SchwarzianOutput {
    schwarzian: MatrixJson,
    expansion: crate::schwarzian::ExpansionReport,
    order_ok: bool,
    tol: f64,
    passed: bool,
}

fn matrix(doc: &MatrixJson, fibers: Option<usize>) -> Result<AMatrix> {
    replicate_matrix(AMatrix::try_from(doc)?, fibers)
}

fn build_curve(cfg: &CurveConfig, fibers: Option<usize>) -> Result<MatrixCurve> {
    match cfg {
        CurveConfig::Polynomial { coeffs, center } => {
            let coeffs = coeffs.iter().map(|c| matrix(c, fibers)).collect::<Result<Vec<_>>>()?;
            MatrixCurve::with_center(coeffs, *center)
        }
        CurveConfig::Mobius { a, b, c, d, degree, center } => mobius_curve_at(
            &matrix(a, fibers)?,
            &matrix(b, fibers)?,
            &matrix(c, fibers)?,
            &matrix(d, fibers)?,
            *degree,
            *center,
        ),
    }
}

fn run_schwarzian(cfg: SchwarzianConfig, cli: &Cli) -> Result<Outcome> {
    let curve = build_curve(&cfg.curve, cli.fibers)?;
    let order = match cfg.slot_order {
        SlotConfig::Classical => SlotOrder::Classical,
        SlotConfig::Literal => SlotOrder::Literal,
    };
    let schw = schwarzian_at(&curve, cfg.w)?;
    let expansion = expansion_check_ordered(&curve, cfg.w, cfg.points, &cfg.steps, order)?;
    let order_ok = match (cfg.min_order, expansion.order_estimate) {
        (Some(min), Some(observed)) => observed >= min,
        _ => true,
    };
    let tol = cli.tol.unwrap_or(cfg.tol);
    let passed = order_ok && within(expansion.gap, tol);
    let out = SchwarzianOutput { schwarzian: MatrixJson::from(&schw), expansion, order_ok, tol, passed };
    Ok(Outcome { text: to_json(&out)?, passed })
}

// ---------------------------------------------------------------------------
// wick

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct EllipticConfig {
    modulus: Complex64,
    characteristic: [f64; 2],
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct CauchyCase {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct QuasiCase {
    z: Complex64,
    m: i64,
    n: i64,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct WickConfig {
    /// Genus-0 determinants compared with the Cauchy closed form.
    #[serde(default)]
    cauchy: Vec<CauchyCase>,
    /// Needed for genus-1 Fay cases and quasi-periodicity.
    #[serde(default)]
    elliptic: Option<EllipticConfig>,
    /// Points `(a1, a2, b1, b2)`; genus 1 with `elliptic`, else genus 0.
    #[serde(default)]
    fay: Vec<[Complex64; 4]>,
    #[serde(default)]
    quasi: Vec<QuasiCase>,
    #[serde(default = "default_wick_tol")]
    tol: f64,
}

fn default_wick_tol() -> f64 {
    1e-8
}

#[derive(Serialize)]
struct WickEntry {
    check: &'static str,
    index: usize,
    fiber: usize,
    value: Complex64,
    reference: Complex64,
    residual: f64,
}

fn relative_gap(value: Complex64, reference: Complex64) -> f64 {
    let scale = value.norm().max(reference.norm());
    if scale > 0.0 {
        (value - reference).norm() / scale
    } else {
        0.0
    }
}

fn run_wick(cfg: WickConfig, cli: &Cli) -> Result<Outcome> {
    let elliptic = cfg
        .elliptic
        .as_ref()
        .map(|e| EllipticData::new(e.modulus, (e.characteristic[0], e.characteristic[1])))
        .transpose()?;
    let mut entries = Vec::new();
    for (index, case) in cfg.cauchy.iter().enumerate() {
        let value = wick_determinant(&case.a, &case.b, &Kernel::Genus0)?;
        let reference = cauchy_determinant(&case.a, &case.b)?;
        let residual = relative_gap(value, reference);
        entries.push(WickEntry { check: "cauchy", index, fiber: 0, value, reference, residual });
    }
    for (index, &[a1, a2, b1, b2]) in cfg.fay.iter().enumerate() {
        let (check, r) = match &elliptic {
            Some(data) => ("fay_genus1", fay_residual_g1(a1, a2, b1, b2, data)?),
            None => ("fay_genus0", fay_residual_g0(a1, a2, b1, b2)?),
        };
        entries.push(WickEntry { check, index, fiber: 0, value: r.determinant, reference: r.product, residual: r.residual });
    }
    if !cfg.quasi.is_empty() {
        let data = elliptic.as_ref().ok_or_else(|| Error::InvalidInput("quasi cases need elliptic data".into()))?;
        for (index, q) in cfg.quasi.iter().enumerate() {
            let residual = quasi_periodicity_residual(q.z, q.m, q.n, data)?;
            let zero = Complex64::new(0.0, 0.0);
            entries.push(WickEntry { check: "quasi_periodicity", index, fiber: 0, value: zero, reference: zero, residual });
        }
    }
    let residuals: Vec<f64> = entries.iter().map(|e| e.residual).collect();
    Report::new(entries, residuals, cli.tol.unwrap_or(cfg.tol)).outcome()
}

// ---------------------------------------------------------------------------
// curvature

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Directions {
    plus: MatrixJson,
    minus: MatrixJson,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct CurvatureConfig {
    #[serde(rename = "N")]
    n: usize,
    point: PointConfig,
    #[serde(default)]
    times: Vec<Complex64>,
    #[serde(default = "default_step")]
    h: f64,
    /// Deformation directions (`N x N`); drawn from `--seed` when absent.
    #[serde(default)]
    directions: Option<Directions>,
    /// Allowed deviation of the Richardson ratio from 4.
    #[serde(default = "default_ratio_tol")]
    tol: f64,
}

fn default_step() -> f64 {
    1e-2
}

fn default_ratio_tol() -> f64 {
    0.5
}

#[derive(Serialize)]
struct CurvatureEntry {
    fiber: usize,
    /// Coefficients at `h`, `h/2`, `h/4`.
    coefficients: [f64; 3],
    ratio: f64,
}

fn run_curvature(cfg: CurvatureConfig, cli: &Cli) -> Result<Outcome> {
    check_times(&cfg.times)?;
    let source = build_source(cfg.n, &cfg.point, cli.fibers)?;
    let ctx = source.base_context();
    let w = source.point_at(ctx.n)?;
    let g = GammaElement::from_times(ctx, &cfg.times);
    let (plus, minus) = match &cfg.directions {
        Some(d) => (matrix(&d.plus, Some(ctx.m))?, matrix(&d.minus, Some(ctx.m))?),
        None => {
            let mut rng = SeededRng::new(cli.seed.unwrap_or(0));
            (rng.amatrix(ctx.m, ctx.n, ctx.n), rng.amatrix(ctx.m, ctx.n, ctx.n))
        }
    };
    let conv = log_potential_convergence(&w, &g, &plus, &minus, cfg.h)?;
    let entries: Vec<CurvatureEntry> = (0..ctx.m)
        .map(|fiber| CurvatureEntry {
            fiber,
            coefficients: [0, 1, 2].map(|i| conv.coefficients[i].fiber(fiber).re),
            ratio: conv.ratios[fiber],
        })
        .collect();
    let deviations: Vec<f64> = conv.ratios.iter().map(|r| (r - 4.0).abs()).collect();
    Report::new(entries, deviations, cli.tol.unwrap_or(cfg.tol)).outcome()
}

// ---------------------------------------------------------------------------
// selftest

struct Suite {
    lines: String,
    passed: bool,
}

impl Suite {
    fn record(&mut self, check: &str, fiber: usize, value: f64, tol: f64) {
        let ok = within(value, tol);
        self.passed &= ok;
        let verdict = if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(self.lines, "{check} fiber={fiber} value={value:.6e} tol={tol:.1e} {verdict}");
    }

    fn record_all(&mut self, check: &str, values: &[f64], tol: f64) {
        for (fiber, &v) in values.iter().enumerate() {
            self.record(check, fiber, v, tol);
        }
    }

    fn fail(&mut self, check: &str, e: &Error) {
        self.passed = false;
        let _ = writeln!(self.lines, "{check} error=\"{e}\" FAIL");
    }
}

fn random_soliton(rng: &mut SeededRng) -> Soliton {
    loop {
        let (p, q) = (rng.in_disk(0.5), rng.in_disk(0.5));
        if (p - q).norm() > 0.2 {
            return Soliton { p, q, c: rng.in_disk(0.6) };
        }
    }
}

/// Per-fiber closed form `1 + c/(p-q) (1 - e(p)/e(q))`, `e(x) = exp Σ t_k x^k`.
fn one_soliton_tau(s: &Soliton, times: &[Complex64]) -> Complex64 {
    let e = |x: Complex64| {
        times.iter().enumerate().map(|(k, t)| t * x.powi(k as i32 + 1)).sum::<Complex64>().exp()
    };
    1.0 + s.c / (s.p - s.q) * (1.0 - e(s.p) / e(s.q))
}

fn per_fiber(a: &AValue, b: &AValue, f: impl Fn(Complex64, Complex64) -> f64) -> Vec<f64> {
    a.fibers().iter().zip(b.fibers()).map(|(&x, &y)| f(x, y)).collect()
}

fn random_symbol(rng: &mut SeededRng, basis: &Arc<Basis>, window: Window, m: usize) -> Result<PsdoSymbol> {
    let mut terms = Vec::new();
    for order in -2..=1 {
        let mut p = Poly::zero(basis, m, 1);
        for i in 0..basis.len() {
            if basis.total_degree(i) <= 2 {
                p.set_coefficient(basis.exponents(i), AMatrix::from_avalue(&rng.avalue(m)))?;
            }
        }
        terms.push((order, p));
    }
    PsdoSymbol::from_terms(basis, window, m, 1, terms)
}

type Check = fn(&mut SeededRng, usize, &mut Suite) -> Result<()>;

fn selftest(seed: u64, m: usize) -> Result<Outcome> {
    let mut rng = SeededRng::new(seed);
    let mut suite = Suite { lines: format!("selftest seed={seed} fibers={m}\n"), passed: true };
    let checks: [(&str, Check); 9] = [
        ("cross_bridge", check_cross_bridge),
        ("trivial_trisecant", check_trivial_trisecant),
        ("soliton", check_soliton),
        ("shift", check_shift),
        ("fiber_independence", check_fiber_independence),
        ("schwarzian", check_schwarzian),
        ("psdo", check_psdo),
        ("wick", check_wick),
        ("curvature", check_curvature),
    ];
    for (name, check) in checks {
        if let Err(e) = check(&mut rng, m, &mut suite) {
            suite.fail(name, &e);
        }
    }
    let _ = writeln!(suite.lines, "overall {}", if suite.passed { "PASS" } else { "FAIL" });
    Ok(Outcome { text: suite.lines, passed: suite.passed })
}

fn check_cross_bridge(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let mut worst = vec![0.0f64; m];
    for _ in 0..10 {
        let n = 1 + rng.below(4);
        let (a, d) = (rng.well_conditioned(m, n), rng.well_conditioned(m, n));
        let (b, c) = (rng.small(m, n, n, 0.7), rng.small(m, n, n, 0.7));
        let co = coordinatize_graphs(&c.matmul(&a.inv()?)?, &b.matmul(&d.inv()?)?)?;
        let lhs = cross_pol(&co.p_plus, &co.p_minus, &co.q_plus, &co.q_minus)?.det()?;
        let rhs = tau_block(&a, &b, &c, &d)?;
        for (k, v) in per_fiber(&lhs, &rhs, |l, r| (l - r).norm() / (1.0 + r.norm())).into_iter().enumerate() {
            worst[k] = worst[k].max(v);
        }
    }
    suite.record_all("cross_bridge", &worst, 1e-10);
    Ok(())
}

fn check_trivial_trisecant(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let ctx = TruncationContext::new(6, m)?;
    let w = GrassmannPoint::reference_plus(ctx);
    let z = [0; 4].map(|_| rng.in_disk(0.45));
    let r = trisecant_residual(&w, &GammaElement::identity(ctx), z)?;
    let abs: Vec<f64> = r.sum.fibers().iter().map(|s| s.norm()).collect();
    suite.record_all("trivial_trisecant", &abs, 1e-14);
    Ok(())
}

fn soliton_instance(rng: &mut SeededRng, m: usize, n: usize) -> Result<(SolitonPoint, Vec<Soliton>)> {
    let sols: Vec<Soliton> = (0..m).map(|_| random_soliton(rng)).collect();
    Ok((SolitonPoint::new(n, sols.iter().map(|&s| vec![s]).collect())?, sols))
}

fn check_soliton(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let (point, sols) = soliton_instance(rng, m, 16)?;
    let ctx = point.base_context();
    let w = point.point_at(ctx.n)?;
    let times: Vec<Complex64> = (0..3).map(|_| rng.in_disk(0.2)).collect();
    let g = GammaElement::from_times(ctx, &times);

    let (value, _) = tau_at(&w, &g)?;
    let closed: Vec<f64> = sols
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let r = one_soliton_tau(s, &times);
            (value.fiber(k) - r).norm() / r.norm()
        })
        .collect();
    suite.record_all("closed_form_tau", &closed, 1e-8);

    let zeta = rng.in_annulus(1.5, 3.0);
    let psi = baker(&w, &g, zeta)?.psi;
    let (shifted, _) = tau_at(&w, &g.compose(&GammaElement::q(ctx, zeta)?)?)?;
    let lhs = AValue::new(psi.fibers().iter().zip(value.fibers()).map(|(a, b)| a * b).collect())?;
    suite.record_all("baker_relation", &per_fiber(&lhs, &shifted, |x, y| (x - y).norm() / y.norm()), 1e-10);

    let z = [0; 4].map(|_| rng.in_disk(0.3));
    suite.record_all("soliton_trisecant", &trisecant_residual(&w, &g, z)?.relative, 1e-8);
    Ok(())
}

fn check_shift(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let (point, _) = soliton_instance(rng, m, 16)?;
    let ctx = point.base_context();
    let w = point.point_at(ctx.n)?;
    let g = GammaElement::from_times(ctx, &[rng.in_disk(0.2), rng.in_disk(0.2)]);
    let z = rng.in_disk(0.3);
    let (via_shift, _) = tau_at(&w, &shift_times(&g, z)?)?;
    let (via_q, _) = tau_at(&w, &g.compose(&GammaElement::q(ctx, 1.0 / z)?.inverse())?)?;
    suite.record_all("shift_equivalence", &per_fiber(&via_shift, &via_q, |x, y| (x - y).norm() / y.norm()), 1e-8);
    Ok(())
}

fn check_fiber_independence(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let (point, sols) = soliton_instance(rng, m, 8)?;
    let times: Vec<Complex64> = (0..3).map(|_| rng.in_disk(0.2)).collect();
    let joint = tau(&point, &GammaElement::from_times(point.base_context(), &times))?.value;
    for (k, s) in sols.iter().enumerate() {
        let single = SolitonPoint::new(8, vec![vec![*s]])?;
        let alone = tau(&single, &GammaElement::from_times(single.base_context(), &times))?.value;
        suite.record("fiber_independence", k, (joint.fiber(k) - alone.fiber(0)).norm(), 0.0);
    }
    Ok(())
}

fn check_schwarzian(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let affine = MatrixCurve::new(vec![rng.amatrix(m, 3, 3), rng.well_conditioned(m, 3)])?;
    let s = schwarzian_at(&affine, rng.in_disk(1.0))?;
    let per: Vec<f64> = s.fibers().iter().map(crate::opalgebra::cmat_max_abs).collect();
    suite.record_all("schwarzian_affine", &per, 1e-12);

    // scalar Möbius data per fiber commute with each other
    let scalars = |rng: &mut SeededRng| AMatrix::scalar(&AValue::new((0..m).map(|_| rng.in_disk(1.0)).collect()).expect("m >= 1"), 2);
    let (a, b, c) = (scalars(rng), scalars(rng), scalars(rng));
    let d = AMatrix::scalar(&AValue::splat(m, c64(2.0, 0.0)), 2);
    let at = rng.in_disk(0.3);
    let curve = mobius_curve_at(&a, &b, &c, &d, 12, at)?;
    let per: Vec<f64> = schwarzian_at(&curve, at)?.fibers().iter().map(crate::opalgebra::cmat_max_abs).collect();
    suite.record_all("schwarzian_mobius", &per, 1e-10);
    Ok(())
}

fn check_psdo(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let window = Window { d: 4, depth: 4, kmax: 3 };
    let basis = Basis::new(2, window.d);
    let x = random_symbol(rng, &basis, window, m)?;
    let y = random_symbol(rng, &basis, window, m)?;
    let z = random_symbol(rng, &basis, window, m)?;
    let left = psdo_mul(&psdo_mul(&x, &y)?, &z)?;
    let right = psdo_mul(&x, &psdo_mul(&y, &z)?)?;
    let (diff, _) = left.sub(&right)?.window_norms();
    let scale = max_of(left.window_norms().0).max(1.0);
    suite.record_all("psdo_associativity", &diff.iter().map(|d| d / scale).collect::<Vec<_>>(), 1e-12);
    let (split, _) = plus_part(&x).add(&minus_part(&x))?.sub(&x)?.window_norms();
    suite.record_all("psdo_split", &split, 0.0);
    Ok(())
}

fn check_wick(rng: &mut SeededRng, _m: usize, suite: &mut Suite) -> Result<()> {
    // interleaved circles keep the Cauchy matrix well conditioned
    let n = 2 + rng.below(4);
    let spread = |radius: f64, offset: f64, rng: &mut SeededRng| -> Vec<Complex64> {
        (0..n)
            .map(|j| Complex64::from_polar(radius, std::f64::consts::TAU * (j as f64 + offset) / n as f64) + rng.in_disk(0.1))
            .collect()
    };
    let a = spread(0.8, 0.0, rng);
    let b = spread(1.6, 0.5, rng);
    let det = wick_determinant(&a, &b, &Kernel::Genus0)?;
    suite.record("cauchy", 0, relative_gap(det, cauchy_determinant(&a, &b)?), 1e-10);

    let data = EllipticData::new(c64(0.0, 1.0), (0.5, 0.0))?;
    let pts = [0; 4].map(|_| rng.in_disk(0.2));
    let shifted = [pts[0], pts[1] + c64(0.4, 0.1), pts[2] + c64(-0.3, 0.35), pts[3] + c64(0.1, -0.4)];
    let r = fay_residual_g1(shifted[0], shifted[1], shifted[2], shifted[3], &data)?;
    suite.record("fay_genus1", 0, r.residual, 1e-8);
    let q = quasi_periodicity_residual(rng.in_disk(0.5), 1, -1, &data)?;
    suite.record("theta_quasi_periodicity", 0, q, 1e-12);
    Ok(())
}

fn check_curvature(rng: &mut SeededRng, m: usize, suite: &mut Suite) -> Result<()> {
    let sols: Vec<Soliton> = (0..m).map(|_| random_soliton(rng)).collect();
    let point = SolitonPoint::new(8, sols.into_iter().map(|s| vec![s]).collect())?;
    let ctx = point.base_context();
    let w = point.point_at(ctx.n)?;
    let g = GammaElement::from_times(ctx, &[c64(0.4, 0.0), c64(0.2, 0.0), c64(0.1, 0.0)]);
    let (plus, minus) = (rng.amatrix(m, 8, 8), rng.amatrix(m, 8, 8));
    let conv = log_potential_convergence(&w, &g, &plus, &minus, 1e-2)?;
    let dev: Vec<f64> = conv.ratios.iter().map(|r| (r - 4.0).abs()).collect();
    suite.record_all("richardson_ratio", &dev, 0.5);
    Ok(())
}
