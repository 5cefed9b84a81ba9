//! Analytic torsion and the suites built on it: functoriality, metric and
//! gauge sweeps, the metric anomaly, flux continuity and the partition
//! function ledger.
//!
//! Torsions are kept in log scale throughout:
//! `log τ = ½ log Det′(D₀†D₀) − ½ log Det′(D₁†D₁)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_rational::Rational64;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::complex::{describe, ComplexSpec, ConstantForm};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::geometry::{Character, FlatTorus, MetricPath};
use crate::linalg::{RMatrix, C64};
use crate::special::kronecker_torsion;
use crate::spectral::{betti_numbers, geometric_grid, small_time_fit, FitBasis, SpectralOptions, WeightedTable};
use crate::zeta::{epstein_at_zero, hurwitz_logdet, logdets, HeatTraceSettings, Method, ZetaResult};

/// How the determinant-line element is reported.
pub const BASIS_NOTE: &str = "coefficient of the orthonormal harmonic volume element η₀ ⊗ η₁⁻¹";

#[derive(Clone, Debug, PartialEq)]
pub struct TorsionValue {
    pub log_tau: f64,
    pub basis_note: &'static str,
    pub acyclic: bool,
    pub b0: usize,
    pub b1: usize,
    pub err: f64,
    pub grades: [ZetaResult; 2],
}

/// Everything a torsion computation needs besides the spec.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub method: Method,
    pub heat: HeatTraceSettings,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self { method: Method::Auto, heat: HeatTraceSettings::default() }
    }
}

impl Pipeline {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Default::default() }
    }
}

pub fn analytic_torsion<E: Executor>(spec: &ComplexSpec, pipe: &Pipeline, exec: &E) -> Result<TorsionValue> {
    let betti = betti_numbers(spec)?;
    let grades = logdets(spec, pipe.method, &pipe.heat, exec)?;
    Ok(TorsionValue {
        log_tau: 0.5 * (grades[0].log_det_prime - grades[1].log_det_prime),
        basis_note: BASIS_NOTE,
        acyclic: betti.b0 == 0 && betti.b1 == 0,
        b0: betti.b0,
        b1: betti.b1,
        err: 0.5 * (grades[0].err + grades[1].err),
        grades,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeTorsion {
    pub log_ratio: f64,
    pub chars: (Character, Character),
    pub err: f64,
}

/// `log τ(ρ₁) − log τ(ρ₂)` for the same complex and metric.
pub fn relative_torsion<E: Executor>(
    spec: &ComplexSpec,
    rho1: &Character,
    rho2: &Character,
    pipe: &Pipeline,
    exec: &E,
) -> Result<RelativeTorsion> {
    if rho1.n() != rho2.n() {
        return Err(Error::domain("relative torsion", "characters of different dimension"));
    }
    let a = analytic_torsion(&spec.with_character(rho1.clone())?, pipe, exec)?;
    let b = analytic_torsion(&spec.with_character(rho2.clone())?, pipe, exec)?;
    Ok(RelativeTorsion { log_ratio: a.log_tau - b.log_tau, chars: (rho1.clone(), rho2.clone()), err: a.err + b.err })
}

/// Outcome of one suite, in the shape written to verdict files.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub spec: String,
    pub samples: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: &str, spec: String, samples: usize, max_deviation: f64, tolerance: f64) -> Self {
        Self { suite: suite.into(), spec, samples, max_deviation, tolerance, pass: max_deviation < tolerance }
    }
}

/// Direct sums: the torsion of the block sum, computed spectrally from the
/// merged heat trace, against the sum of the parts.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectSumCheck {
    pub sum: TorsionValue,
    pub parts: (TorsionValue, TorsionValue),
    pub report: SuiteReport,
}

pub fn direct_sum_check<E: Executor>(
    spec1: &ComplexSpec,
    spec2: &ComplexSpec,
    pipe: &Pipeline,
    tolerance: f64,
    exec: &E,
) -> Result<DirectSumCheck> {
    let sum_spec = ComplexSpec::direct_sum(alloc::vec![spec1.clone(), spec2.clone()])?;
    let a = analytic_torsion(spec1, pipe, exec)?;
    let b = analytic_torsion(spec2, pipe, exec)?;
    let sum_pipe = Pipeline { method: Method::HeatTrace, heat: pipe.heat.clone() };
    let s = analytic_torsion(&sum_spec, &sum_pipe, exec)?;
    if (s.b0, s.b1) != (a.b0 + b.b0, a.b1 + b.b1) {
        return Err(Error::consistency("direct sum", "Betti numbers do not add"));
    }
    let dev = (s.log_tau - a.log_tau - b.log_tau).abs();
    let report = SuiteReport::new("direct-sum", describe(&sum_spec), 1, dev, tolerance);
    Ok(DirectSumCheck { sum: s, parts: (a, b), report })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoveringCheck {
    pub fold: usize,
    pub cover: f64,
    pub base_sum: f64,
    pub report: SuiteReport,
}

/// `n`-fold cover of the circle: the cover (length `n`, character `u`) by
/// the Epstein route against `Σ_k` of Hurwitz closed forms of the base with
/// characters `(u+k)/n`.
pub fn covering_check(u: f64, fold: usize, tolerance: f64) -> Result<CoveringCheck> {
    if fold == 0 {
        return Err(Error::domain("covering", "fold must be positive"));
    }
    let nf = fold as f64;
    let cover_torus = FlatTorus::circle(nf)?;
    let b = cover_torus.de_rham_symbol_form();
    let (_, zp) = epstein_at_zero(&b, &[u])?;
    let cover = -0.5 * zp;
    let mut base_sum = 0.0;
    for k in 0..fold {
        let a = crate::geometry::wrap_unit((u + k as f64) / nf);
        base_sum += 0.5 * hurwitz_logdet(if a == 0.0 { 1.0 } else { a })?;
    }
    let report = SuiteReport::new(
        "covering",
        format!("circle, u = {u}, fold {fold}"),
        fold,
        (cover - base_sum).abs(),
        tolerance,
    );
    Ok(CoveringCheck { fold, cover, base_sum, report })
}

/// `log τ(X₁×X₂) = χ₂ log τ₁ + χ₁ log τ₂`.
pub fn product_prediction(log_tau1: f64, chi1: i64, log_tau2: f64, chi2: i64) -> f64 {
    chi2 as f64 * log_tau1 + chi1 as f64 * log_tau2
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductCheck {
    pub product: TorsionValue,
    pub predicted: f64,
    pub report: SuiteReport,
}

/// Product of two circles realized spectrally as a 2-torus. Passes iff the
/// product torsion matches the prediction within twice its error.
pub fn product_check_circles<E: Executor>(u1: f64, u2: f64, pipe: &Pipeline, exec: &E) -> Result<ProductCheck> {
    let c1 = ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[u1])?;
    let c2 = ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[u2])?;
    let t1 = analytic_torsion(&c1, pipe, exec)?;
    let t2 = analytic_torsion(&c2, pipe, exec)?;
    let chi1 = t1.b0 as i64 - t1.b1 as i64;
    let chi2 = t2.b0 as i64 - t2.b1 as i64;
    let predicted = product_prediction(t1.log_tau, chi1, t2.log_tau, chi2);
    let t2d = ComplexSpec::flat_de_rham(FlatTorus::identity(2), &[u1, u2])?;
    let product = analytic_torsion(&t2d, pipe, exec)?;
    let dev = (product.log_tau - predicted).abs();
    let tol = 2.0 * product.err;
    let mut report = SuiteReport::new("product", describe(&t2d), 1, dev, tol);
    report.pass = dev <= tol;
    Ok(ProductCheck { product, predicted, report })
}

/// Exponents of the factors in `log τ(X₁×X₂)` from Euler characteristics:
/// `(χ₂, χ₁)` multiplying `(log τ₁, log τ₂)`.
pub fn product_exponents(chi1: i64, chi2: i64) -> (Rational64, Rational64) {
    (Rational64::from_integer(chi2), Rational64::from_integer(chi1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub s: f64,
    pub log_tau: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub report: SuiteReport,
}

fn max_spread(values: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

fn sweep_rows<E, F>(samples: &[f64], pipe: &Pipeline, exec: &E, make: F) -> Result<Vec<SweepRow>>
where
    E: Executor,
    F: Fn(f64) -> Result<ComplexSpec> + Sync + Send,
{
    let rows = exec.map_chunks(samples, 1, |c| -> Result<SweepRow> {
        let s = c[0];
        let t = analytic_torsion(&make(s)?, pipe, exec)?;
        Ok(SweepRow { s, log_tau: t.log_tau, err: t.err })
    });
    rows.into_iter().collect()
}

/// Evenly spaced parameters on `[a, b]`.
pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return alloc::vec![a];
    }
    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
}

/// Metric invariance along a path; refused in even dimension, where the
/// torsion depends on the metric (use `relative_metric_sweep`).
pub fn metric_sweep<E: Executor>(
    spec: &ComplexSpec,
    path: &MetricPath,
    samples: &[f64],
    tolerance: f64,
    pipe: &Pipeline,
    exec: &E,
) -> Result<Sweep> {
    if spec.n() % 2 == 0 {
        return Err(Error::domain(
            "metric sweep",
            "torsion is metric dependent in even dimension; sweep the relative torsion instead",
        ));
    }
    let b = betti_numbers(spec)?;
    if b.b0 + b.b1 != 0 {
        return Err(Error::domain("metric sweep", "sweeps need an acyclic complex (no harmonic-basis transport)"));
    }
    let rows = sweep_rows(samples, pipe, exec, |s| spec.with_metric(&path.gram(s)))?;
    let dev = max_spread(rows.iter().map(|r| r.log_tau));
    let report = SuiteReport::new("metric", describe(spec), rows.len(), dev, tolerance);
    Ok(Sweep { rows, report })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeRow {
    pub s: f64,
    pub log_tau1: f64,
    pub log_tau2: f64,
    pub log_ratio: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeSweep {
    pub rows: Vec<RelativeRow>,
    /// Largest variation of a single torsion along the path.
    pub individual_deviation: f64,
    pub report: SuiteReport,
}

pub fn relative_metric_sweep<E: Executor>(
    spec: &ComplexSpec,
    rho1: &Character,
    rho2: &Character,
    path: &MetricPath,
    samples: &[f64],
    tolerance: f64,
    pipe: &Pipeline,
    exec: &E,
) -> Result<RelativeSweep> {
    let s1 = spec.with_character(rho1.clone())?;
    let s2 = spec.with_character(rho2.clone())?;
    for s in [&s1, &s2] {
        let b = betti_numbers(s)?;
        if b.b0 + b.b1 != 0 {
            return Err(Error::domain("relative sweep", "both twisted complexes must be acyclic"));
        }
    }
    let a = sweep_rows(samples, pipe, exec, |s| s1.with_metric(&path.gram(s)))?;
    let b = sweep_rows(samples, pipe, exec, |s| s2.with_metric(&path.gram(s)))?;
    let rows: Vec<RelativeRow> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| RelativeRow {
            s: x.s,
            log_tau1: x.log_tau,
            log_tau2: y.log_tau,
            log_ratio: x.log_tau - y.log_tau,
            err: x.err + y.err,
        })
        .collect();
    let dev = max_spread(rows.iter().map(|r| r.log_ratio));
    let individual = max_spread(rows.iter().map(|r| r.log_tau1)).max(max_spread(rows.iter().map(|r| r.log_tau2)));
    let report = SuiteReport::new("relative-metric", describe(spec), rows.len(), dev, tolerance);
    Ok(RelativeSweep { rows, individual_deviation: individual, report })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyCheck {
    pub s0: f64,
    /// Centered finite difference of `log τ`.
    pub slope: f64,
    /// Fitted `t⁰` coefficient of `Str(α e^{−tL})`.
    pub str_alpha_a: f64,
    /// `Str(αQ)` over harmonic vectors.
    pub str_alpha_q: f64,
    /// `−½ (str_alpha_a − str_alpha_q)`.
    pub predicted: f64,
    pub relative_error: f64,
    pub report: SuiteReport,
}

/// Finite-difference slope of `log τ` against the heat-invariant formula
/// `d/ds log τ = −½ ([Str(α e^{−tL})]_{t⁰} − Str(αQ))`.
pub fn anomaly_check<E: Executor>(
    spec: &ComplexSpec,
    path: &MetricPath,
    s0: f64,
    h: f64,
    tolerance: f64,
    pipe: &Pipeline,
    exec: &E,
) -> Result<AnomalyCheck> {
    let b = betti_numbers(spec)?;
    if b.b0 + b.b1 != 0 {
        return Err(Error::domain("anomaly check", "needs an acyclic complex"));
    }
    let plus = analytic_torsion(&spec.with_metric(&path.gram(s0 + h))?, pipe, exec)?;
    let minus = analytic_torsion(&spec.with_metric(&path.gram(s0 - h))?, pipe, exec)?;
    let slope = (plus.log_tau - minus.log_tau) / (2.0 * h);
    let at = spec.with_metric(&path.gram(s0))?;
    let dg = path.derivative(s0);
    let builder = crate::complex::ModeBuilder::new(&at)?;
    let (lo, hi) = match pipe.heat.window {
        Some(w) => w,
        None => crate::spectral::default_window(&builder)?,
    };
    let table = WeightedTable::build(&at, &dg, lo, &pipe.heat.spectral, exec)?;
    let ts = geometric_grid(lo, hi, pipe.heat.samples);
    let vals: Vec<f64> = ts.iter().map(|&t| table.supertrace(t, exec).0).collect();
    let n = at.n();
    let fit = small_time_fit(&ts, &vals, n, &FitBasis::standard(n, pipe.heat.order, false))?;
    let str_alpha_a = fit.coefficient(0.0);
    let predicted = -0.5 * (str_alpha_a - table.kernel_weight);
    let dev = (slope - predicted).abs();
    let rel = dev / predicted.abs().max(1e-300);
    let mut report = SuiteReport::new("anomaly", describe(spec), 2, rel, tolerance);
    report.pass = rel < tolerance || (predicted.abs() < 1e-12 && dev < 1e-8);
    Ok(AnomalyCheck {
        s0,
        slope,
        str_alpha_a,
        str_alpha_q: table.kernel_weight,
        predicted,
        relative_error: rel,
        report,
    })
}

/// Gauge sweep: `D ↦ e^{−sβ} D e^{sβ}` for an even constant form `β`.
pub fn gauge_sweep<E: Executor>(
    spec: &ComplexSpec,
    beta: &ConstantForm,
    samples: &[f64],
    tolerance: f64,
    pipe: &Pipeline,
    exec: &E,
) -> Result<Sweep> {
    let rows = sweep_rows(samples, pipe, exec, |s| spec.conjugated(beta.clone(), s))?;
    let dev = max_spread(rows.iter().map(|r| r.log_tau));
    let report = SuiteReport::new("gauge", describe(spec), rows.len(), dev, tolerance);
    Ok(Sweep { rows, report })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluxContinuity {
    /// `(ε, log τ(εH₀) − log τ(0), err)`.
    pub rows: Vec<(f64, f64, f64)>,
    pub decreasing: bool,
    /// Least-squares slope of `log|Δ|` against `log ε`.
    pub slope: f64,
    pub pass: bool,
}

/// Slope above which the deviation is accepted as `o(ε)`.
pub const LITTLE_O_SLOPE: f64 = 1.2;

pub fn flux_continuity<E, F>(family: F, eps: &[f64], pipe: &Pipeline, exec: &E) -> Result<FluxContinuity>
where
    E: Executor,
    F: Fn(f64) -> Result<ComplexSpec>,
{
    let base = analytic_torsion(&family(0.0)?, pipe, exec)?;
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let t = analytic_torsion(&family(e)?, pipe, exec)?;
        rows.push((e, t.log_tau - base.log_tau, t.err + base.err));
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let decreasing = sorted.windows(2).all(|w| w[1].1.abs() < w[0].1.abs());
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 != 0.0).map(|r| (r.0.ln(), r.1.abs().ln())).collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(FluxContinuity { rows, decreasing, slope, pass: decreasing && slope > LITTLE_O_SLOPE })
}

/// Spectral Dolbeault torsion of a complex torus with character `(u, v)`
/// against the closed form. Returns `(spectral, closed)` in log scale.
pub fn kronecker_match<E: Executor>(
    u: f64,
    v: f64,
    tau: C64,
    pipe: &Pipeline,
    exec: &E,
) -> Result<(TorsionValue, f64)> {
    let torus = crate::geometry::ComplexTorus::new(tau, 1.0, (u, v))?;
    let spec = ComplexSpec::dolbeault(torus, 0, ConstantForm::zero(1, crate::complex::Parity::Odd))?;
    let spectral = analytic_torsion(&spec, pipe, exec)?;
    Ok((spectral, kronecker_torsion(u, v, tau)?.ln()))
}

/// Which identifications are applied before comparing ghost exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DualityConvention {
    Raw,
    /// `Det′(d_k†d_k) = Det′(d_{n−1−k}†d_{n−1−k})`.
    Hodge,
    /// Ghost towers of `B` and `C` each contribute.
    DoubledTowers,
    DoubledHodge,
}

pub const CONVENTIONS: [DualityConvention; 4] = [
    DualityConvention::Raw,
    DualityConvention::Hodge,
    DualityConvention::DoubledTowers,
    DualityConvention::DoubledHodge,
];

pub type ExponentMap = BTreeMap<usize, Rational64>;

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionLedger {
    pub l: usize,
    pub log_tau_h: f64,
    pub log_tau_0: f64,
    pub log_z: f64,
    pub ghost_exponents_lhs: ExponentMap,
    pub ghost_exponents_rhs: ExponentMap,
    /// `lhs − rhs` under each convention; zero entries dropped.
    pub discrepancies: Vec<(DualityConvention, ExponentMap)>,
}

/// Exponents of `Det′(d_k†d_k)` in the ghost hierarchy product:
/// for `i = 0..2l`, degrees `2l−i, 2l−i−2, … ≥ 0` each with `(−1)^{i+1}`.
pub fn ghost_exponents_lhs(l: usize) -> ExponentMap {
    let mut m = ExponentMap::new();
    for i in 0..=2 * l {
        let sign = if i % 2 == 0 { -1 } else { 1 };
        let mut d = (2 * l - i) as i64;
        while d >= 0 {
            *m.entry(d as usize).or_insert_with(|| Rational64::from_integer(0)) += Rational64::from_integer(sign);
            d -= 2;
        }
    }
    m
}

/// The collapsed form: `−l/2` on even degrees `0..2l`, `(l+1)/2` on odd
/// degrees `1..2l−1`.
pub fn ghost_exponents_rhs(l: usize) -> ExponentMap {
    let mut m = ExponentMap::new();
    let li = l as i64;
    for k in 0..=2 * l {
        let e = if k % 2 == 0 { Rational64::new(-li, 2) } else { Rational64::new(li + 1, 2) };
        m.insert(k, e);
    }
    m
}

fn fold_hodge(m: &ExponentMap, l: usize) -> ExponentMap {
    let mut out = ExponentMap::new();
    for (&k, &e) in m {
        let key = k.min(2 * l - k);
        *out.entry(key).or_insert_with(|| Rational64::from_integer(0)) += e;
    }
    out
}

pub fn ghost_discrepancy(l: usize, convention: DualityConvention) -> ExponentMap {
    let (mut lhs, mut rhs) = (ghost_exponents_lhs(l), ghost_exponents_rhs(l));
    if matches!(convention, DualityConvention::DoubledTowers | DualityConvention::DoubledHodge) {
        for v in lhs.values_mut() {
            *v *= Rational64::from_integer(2);
        }
    }
    if matches!(convention, DualityConvention::Hodge | DualityConvention::DoubledHodge) {
        lhs = fold_hodge(&lhs, l);
        rhs = fold_hodge(&rhs, l);
    }
    let mut out = ExponentMap::new();
    for k in lhs.keys().chain(rhs.keys()) {
        let z = Rational64::from_integer(0);
        let d = lhs.get(k).copied().unwrap_or(z) - rhs.get(k).copied().unwrap_or(z);
        if d != z {
            out.insert(*k, d);
        }
    }
    out
}

/// `log Z = −log τ(X, H) − l log τ(X)` on a torus of dimension `2l + 1`,
/// with the ghost exponent comparison under every convention.
pub fn partition_function<E: Executor>(
    twisted: &ComplexSpec,
    untwisted: &ComplexSpec,
    pipe: &Pipeline,
    exec: &E,
) -> Result<PartitionLedger> {
    let n = twisted.n();
    if n % 2 == 0 || untwisted.n() != n {
        return Err(Error::domain("partition function", "needs two complexes on the same odd-dimensional torus"));
    }
    let l = (n - 1) / 2;
    let log_tau_h = analytic_torsion(twisted, pipe, exec)?.log_tau;
    let log_tau_0 = analytic_torsion(untwisted, pipe, exec)?.log_tau;
    Ok(ledger_from_values(l, log_tau_h, log_tau_0))
}

pub fn ledger_from_values(l: usize, log_tau_h: f64, log_tau_0: f64) -> PartitionLedger {
    PartitionLedger {
        l,
        log_tau_h,
        log_tau_0,
        log_z: -log_tau_h - l as f64 * log_tau_0,
        ghost_exponents_lhs: ghost_exponents_lhs(l),
        ghost_exponents_rhs: ghost_exponents_rhs(l),
        discrepancies: CONVENTIONS.iter().map(|&c| (c, ghost_discrepancy(l, c))).collect(),
    }
}

/// Default options for the heat pipeline with Laplacian spectra (used by
/// the McKean–Singer suite).
pub fn mckean_singer_options() -> SpectralOptions {
    SpectralOptions { laplacians: true, ..Default::default() }
}

/// Tolerance-free convenience: the Gram matrix `e^{2s}G`.
pub fn conformal(g: &RMatrix, s: f64) -> RMatrix {
    g.scale((2.0 * s).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{Parity, SuperconnectionData};
    use crate::geometry::{ComplexTorus, PathFamily};
    use crate::linalg::CMatrix;
    use crate::Sequential;
    use alloc::vec;
    use core::f64::consts::{LN_2, PI};

    fn circle(u: f64) -> ComplexSpec {
        ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[u]).unwrap()
    }

    #[test]
    fn circle_values() {
        let p = Pipeline::with_method(Method::Exact);
        let t = analytic_torsion(&circle(0.25), &p, &Sequential).unwrap();
        assert!((t.log_tau - 0.5 * LN_2).abs() < 1e-12);
        assert!(t.acyclic);
        let t = analytic_torsion(&circle(0.5), &p, &Sequential).unwrap();
        assert!((t.log_tau - LN_2).abs() < 1e-12);
        let h = analytic_torsion(&circle(0.25), &Pipeline::with_method(Method::HeatTrace), &Sequential).unwrap();
        assert!((h.log_tau - 0.5 * LN_2).abs() < 1e-8);
    }

    #[test]
    fn grade_swap_negates() {
        let p = Pipeline::default();
        let s = circle(0.3);
        let a = analytic_torsion(&s, &p, &Sequential).unwrap();
        let b = analytic_torsion(&s.grade_swapped(), &p, &Sequential).unwrap();
        assert_eq!(a.log_tau, -b.log_tau);
    }

    #[test]
    fn relative_torsion_is_antisymmetric() {
        let p = Pipeline::default();
        let s = circle(0.25);
        let r1 = Character::new(&[0.25]).unwrap();
        let r2 = Character::new(&[0.5]).unwrap();
        let a = relative_torsion(&s, &r1, &r2, &p, &Sequential).unwrap();
        let b = relative_torsion(&s, &r2, &r1, &p, &Sequential).unwrap();
        assert_eq!(a.log_ratio + b.log_ratio, 0.0);
        assert!((a.log_ratio - (0.5 * LN_2 - LN_2)).abs() < 1e-12);
        assert_eq!(relative_torsion(&s, &r1, &r1, &p, &Sequential).unwrap().log_ratio, 0.0);
    }

    #[test]
    fn functoriality() {
        let p = Pipeline::default();
        let c = direct_sum_check(&circle(0.25), &circle(0.5), &p, 1e-8, &Sequential).unwrap();
        assert!(c.report.pass, "{c:?}");
        assert!((c.sum.log_tau - 1.5 * LN_2).abs() < 1e-8);
        let d = direct_sum_check(&circle(0.0), &circle(0.25), &p, 1e-8, &Sequential).unwrap();
        assert_eq!((d.sum.b0, d.sum.b1), (1, 1));
        for (u, n) in [(0.5, 2), (0.25, 3), (0.3, 5), (0.7, 1)] {
            let cov = covering_check(u, n, 1e-8).unwrap();
            assert!(cov.report.pass, "{cov:?}");
        }
        let pc = product_check_circles(0.25, 0.4, &p, &Sequential).unwrap();
        assert!(pc.report.pass, "{pc:?}");
        assert_eq!(product_exponents(0, 2), (Rational64::from_integer(2), Rational64::from_integer(0)));
    }

    #[test]
    fn circle_metric_sweep() {
        let p = Pipeline::default();
        let path = MetricPath::new(FlatTorus::identity(1), PathFamily::Conformal).unwrap();
        let sw = metric_sweep(&circle(0.25), &path, &linspace(-0.5, 0.5, 5), 1e-6, &p, &Sequential).unwrap();
        assert!(sw.report.pass, "{sw:?}");
        let t2 = ComplexSpec::flat_de_rham(FlatTorus::identity(2), &[0.2, 0.1]).unwrap();
        assert!(metric_sweep(&t2, &path, &[0.0], 1e-6, &p, &Sequential).is_err());
    }

    #[test]
    fn dolbeault_matches_kronecker() {
        let p = Pipeline::default();
        let (t, k) = kronecker_match(0.5, 0.0, C64::new(0.0, 1.0), &p, &Sequential).unwrap();
        assert!((t.log_tau - k).abs() < 1e-10, "{} {k}", t.log_tau);
    }

    fn e10() -> CMatrix {
        let mut m = CMatrix::zeros(2, 2);
        m[(1, 0)] = C64::new(1.0, 0.0);
        m
    }

    fn t2_super(c: f64, e: f64) -> ComplexSpec {
        let a = ConstantForm::endomorphism(
            2,
            (1, 1),
            Parity::Odd,
            vec![(0, e10().scale(C64::new(c, 0.0))), (3, e10().scale(C64::new(e, 0.0)))],
        )
        .unwrap();
        let g = RMatrix::diagonal(&[1.0, 1.3]);
        ComplexSpec::superconnection(
            FlatTorus::new(g).unwrap(),
            SuperconnectionData::new((1, 1), a).unwrap(),
            Character::new(&[0.25, 0.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn superconnection_flux_is_second_order() {
        let p = Pipeline::default();
        let f = flux_continuity(|e| Ok(t2_super(1.0, e)), &[0.1, 0.05, 0.025], &p, &Sequential).unwrap();
        assert!(f.pass, "{f:?}");
        assert!((f.slope - 2.0).abs() < 0.05);
    }

    #[test]
    fn anomaly_on_t2_superconnection() {
        let p = Pipeline::default();
        let path =
            MetricPath::new(FlatTorus::new(RMatrix::diagonal(&[1.0, 1.3])).unwrap(), PathFamily::Conformal).unwrap();
        let a = anomaly_check(&t2_super(1.0, 0.7), &path, 0.0, 1e-3, 1e-3, &p, &Sequential).unwrap();
        assert!(a.report.pass, "{a:?}");
        assert!(a.slope.abs() > 1e-3);
    }

    #[test]
    fn ghost_ledger_l1() {
        let r = |a, b| Rational64::new(a, b);
        let lhs = ghost_exponents_lhs(1);
        assert_eq!(lhs.into_iter().collect::<Vec<_>>(), vec![(0, r(-2, 1)), (1, r(1, 1)), (2, r(-1, 1))]);
        let rhs = ghost_exponents_rhs(1);
        assert_eq!(rhs.into_iter().collect::<Vec<_>>(), vec![(0, r(-1, 2)), (1, r(1, 1)), (2, r(-1, 2))]);
        let raw = ghost_discrepancy(1, DualityConvention::Raw);
        assert_eq!(raw.into_iter().collect::<Vec<_>>(), vec![(0, r(-3, 2)), (2, r(-1, 2))]);
        let hodge = ghost_discrepancy(1, DualityConvention::Hodge);
        assert_eq!(hodge.into_iter().collect::<Vec<_>>(), vec![(0, r(-2, 1))]);
        let ledger = ledger_from_values(1, 0.3, -0.2);
        assert_eq!(ledger.log_z, -0.3 - (-0.2));
        assert_eq!(ledger.discrepancies.len(), 4);
    }

    #[test]
    fn dolbeault_relative_torsion() {
        let p = Pipeline::default();
        let tau = C64::new(0.0, 1.0);
        let t = ComplexTorus::new(tau, 1.0, (0.5, 0.0)).unwrap();
        let spec = ComplexSpec::dolbeault(t.clone(), 0, ConstantForm::zero(1, Parity::Odd)).unwrap();
        let rho1 = t.internal_character();
        let rho2 = t.with_character(0.0, 0.5).internal_character();
        let r = relative_torsion(&spec, &rho1, &rho2, &p, &Sequential).unwrap();
        let expect = kronecker_torsion(0.5, 0.0, tau).unwrap().ln() - kronecker_torsion(0.0, 0.5, tau).unwrap().ln();
        assert!((r.log_ratio - expect).abs() < 1e-10);
        let _ = PI;
    }
}
