//! Zeta-regularized determinants of the partial Laplacians `D_k†D_k`.
//!
//! Two routes. The exact one applies when every block's spectrum is a
//! shifted quadratic form `{ξᵀBξ : ξ ∈ ℤⁿ + u}` with fixed multiplicities:
//! the Epstein zeta function is continued by splitting its Mellin integral
//! and Poisson-resumming the short-time half. The heat-trace route works for
//! any spec: the trace of `e^{−tD_k†D_k}` is fitted by its power-law
//! expansion on a short window `[t_lo, t₀]`, which continues the small-time
//! half, and the rest is `Σ_λ λ^{−s} Γ(s, t₀λ)` summed exactly.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::complex::{ComplexSpec, ExactProfile, ModeBuilder};
use crate::error::{Error, Result};
use crate::exec::{deterministic_sum, Executor, Kahan};
use crate::geometry::{enumerate_quadratic, DEFAULT_MODE_LIMIT};
use crate::linalg::RMatrix;
use crate::special::{exp_integral_e1, gamma, ln_gamma, upper_incomplete_gamma, EULER_GAMMA};
use crate::spectral::{
    default_window, geometric_grid, small_time_fit, FitBasis, SmallTimeFit, SpectralOptions, SpectralTable,
    DEFAULT_ORDER, DEFAULT_SAMPLES,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaResult {
    pub grade: usize,
    pub zeta0: f64,
    pub zeta_prime0: f64,
    pub log_det_prime: f64,
    pub residue0: f64,
    pub err: f64,
}

impl ZetaResult {
    fn new(grade: usize, zeta0: f64, zeta_prime0: f64, residue0: f64, err: f64) -> Self {
        Self { grade, zeta0, zeta_prime0, log_det_prime: -zeta_prime0, residue0, err }
    }

    /// The determinant of an empty spectrum.
    pub fn empty(grade: usize) -> Self {
        Self::new(grade, 0.0, 0.0, 0.0, 0.0)
    }
}

/// `log Det′` of `{4π²(m+a)² : m ∈ ℤ} ∖ {0}` for `a ∈ (0, 1]`.
///
/// By Lerch, `ζ′_H(0, a) = lnΓ(a) − ½ ln 2π`, and the two half-lattices give
/// `−2[lnΓ(a) + lnΓ(1−a) − ln 2π] = 2 ln|2 sin πa|`. The scale `4π²` drops
/// out because the Hurwitz values at 0 cancel pairwise. At `a = 1` the zero
/// mode is removed and the value is `0` (the circle of length 1).
pub fn hurwitz_logdet(a: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::domain("hurwitz log det", format!("a must lie in (0, 1], got {a}")));
    }
    if a == 1.0 {
        return Ok(0.0);
    }
    Ok(-2.0 * (ln_gamma(a) + ln_gamma(1.0 - a) - (2.0 * PI).ln()))
}

/// Largest argument kept in the incomplete-gamma sums of the exact route.
const EPSTEIN_ARG_MAX: f64 = 50.0;

fn is_trivial(u: &[f64]) -> bool {
    u.iter().all(|x| {
        let r = x - x.round();
        r.abs() < 1e-14
    })
}

struct EpsteinData {
    n: usize,
    t1: f64,
    delta: f64,
    pref: f64,
    /// Values `Q(ξ)` with `ξ ≠ 0` and `t₁Q ≤ EPSTEIN_ARG_MAX`.
    direct: Vec<f64>,
    /// `(b_k, cos 2πk·u)` for the dual sum.
    dual: Vec<(f64, f64)>,
}

impl EpsteinData {
    fn new(b: &RMatrix, u: &[f64]) -> Result<Self> {
        let n = b.rows();
        let det = b.det();
        if !(det > 0.0) {
            return Err(Error::domain("epstein zeta", "quadratic form must be positive definite"));
        }
        let nf = n as f64;
        let t1 = PI / det.powf(1.0 / nf);
        let delta = if is_trivial(u) { 1.0 } else { 0.0 };
        let mut direct = Vec::new();
        for m in enumerate_quadratic(b, u, EPSTEIN_ARG_MAX / t1, DEFAULT_MODE_LIMIT)? {
            let q = b.quad_form(&m.xi(u));
            if q > 1e-300 {
                direct.push(q);
            }
        }
        let binv = b.inverse()?.scale(PI * PI);
        let zero = alloc::vec![0.0; n];
        let mut dual = Vec::new();
        for k in enumerate_quadratic(&binv, &zero, EPSTEIN_ARG_MAX * t1, DEFAULT_MODE_LIMIT)? {
            if k.as_slice().iter().all(|&c| c == 0) {
                continue;
            }
            let kv: Vec<f64> = k.as_slice().iter().map(|&c| c as f64).collect();
            let phase: f64 = kv.iter().zip(u).map(|(a, b)| a * b).sum();
            dual.push((binv.quad_form(&kv), (2.0 * PI * phase).cos()));
        }
        Ok(Self { n, t1, delta, pref: PI.powf(nf / 2.0) / det.sqrt(), direct, dual })
    }

    fn at_zero(&self) -> (f64, f64) {
        let half = self.n as f64 / 2.0;
        let mut acc = Kahan::new();
        acc.add(-self.delta * self.t1.ln());
        for &q in &self.direct {
            acc.add(exp_integral_e1(self.t1 * q));
        }
        acc.add(-self.pref * self.t1.powf(-half) / half);
        for &(bk, c) in &self.dual {
            acc.add(self.pref * c * bk.powf(-half) * upper_incomplete_gamma(half, bk / self.t1));
        }
        (-self.delta, -EULER_GAMMA * self.delta + acc.value())
    }

    fn at(&self, s: f64) -> f64 {
        let half = self.n as f64 / 2.0;
        let mut acc = Kahan::new();
        for &q in &self.direct {
            acc.add(q.powf(-s) * upper_incomplete_gamma(s, self.t1 * q));
        }
        acc.add(self.pref * self.t1.powf(s - half) / (s - half));
        for &(bk, c) in &self.dual {
            acc.add(self.pref * c * bk.powf(s - half) * upper_incomplete_gamma(half - s, bk / self.t1));
        }
        acc.add(-self.delta * self.t1.powf(s) / s);
        acc.value() / gamma(s)
    }
}

/// Epstein zeta `Σ′ (ξᵀBξ)^{−s}` over `ξ ∈ ℤⁿ + u`, continued to all real
/// `s` away from `s = n/2` and the poles of `1/Γ`.
pub fn epstein_zeta(b: &RMatrix, u: &[f64], s: f64) -> Result<f64> {
    if s == 0.0 || s == b.rows() as f64 / 2.0 {
        return Err(Error::domain("epstein zeta", "use epstein_at_zero at s = 0; s = n/2 is a pole"));
    }
    Ok(EpsteinData::new(b, u)?.at(s))
}

/// `(Z(0), Z′(0))` for the Epstein zeta function.
pub fn epstein_at_zero(b: &RMatrix, u: &[f64]) -> Result<(f64, f64)> {
    Ok(EpsteinData::new(b, u)?.at_zero())
}

/// Exact `ZetaResult` for one grade of a family of shifted quadratic
/// spectra with multiplicities.
pub fn epstein_logdet(profiles: &[ExactProfile], grade: usize) -> Result<ZetaResult> {
    let (mut z0, mut zp) = (0.0, 0.0);
    for p in profiles {
        let rank = if grade == 0 { p.rank0 } else { p.rank1 } as f64;
        if rank == 0.0 {
            continue;
        }
        let (a, b) = epstein_at_zero(&p.symbol_form, &p.u)?;
        z0 += rank * a;
        zp += rank * b;
    }
    Ok(ZetaResult::new(grade, z0, zp, 0.0, 1e-12 * (1.0 + zp.abs())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Exact when the spec admits it, heat trace otherwise.
    Auto,
    Exact,
    HeatTrace,
    /// Both routes; a disagreement beyond the error budget is an error.
    CrossChecked,
}

/// Knobs of the heat-trace route.
#[derive(Clone, Debug)]
pub struct HeatTraceSettings {
    /// Fit window; defaults to the spectrum-adapted window.
    pub window: Option<(f64, f64)>,
    pub samples: usize,
    pub order: usize,
    pub spectral: SpectralOptions,
}

impl Default for HeatTraceSettings {
    fn default() -> Self {
        Self { window: None, samples: DEFAULT_SAMPLES, order: DEFAULT_ORDER, spectral: SpectralOptions::default() }
    }
}

/// Relative shift of the alternative window used for the error estimate.
const WINDOW_SHIFT: f64 = 0.8;

/// Heat-trace continuation of both grades, sharing one spectral table.
#[derive(Clone, Debug)]
pub struct HeatTraceZeta {
    pub results: [ZetaResult; 2],
    pub fits: [SmallTimeFit; 2],
    pub table: SpectralTable,
}

fn continued_derivative<E: Executor>(
    table: &SpectralTable,
    grade: usize,
    ts: &[f64],
    n: usize,
    basis: &FitBasis,
    exec: &E,
) -> Result<(f64, SmallTimeFit)> {
    let values: Vec<f64> = ts.iter().map(|&t| table.partial_trace(grade, t, exec)).collect();
    let fit = small_time_fit(ts, &values, n, basis)?;
    let t0 = *ts.last().unwrap();
    let mut zp = Kahan::new();
    for (&p, &c) in fit.powers.iter().zip(&fit.coeffs) {
        if p.abs() < 1e-12 {
            zp.add(c * (EULER_GAMMA + t0.ln()));
        } else {
            zp.add(c * t0.powf(p) / p);
        }
    }
    let lam = if grade == 0 { &table.lam0 } else { &table.lam1 };
    zp.add(deterministic_sum(exec, lam, table.chunk, |&x| exp_integral_e1(t0 * x)));
    Ok((zp.value(), fit))
}

/// Heat-trace route for both grades.
pub fn heat_trace_logdets<E: Executor>(
    spec: &ComplexSpec,
    settings: &HeatTraceSettings,
    exec: &E,
) -> Result<HeatTraceZeta> {
    let builder = ModeBuilder::new(spec)?;
    let (lo, hi) = match settings.window {
        Some(w) => w,
        None => default_window(&builder)?,
    };
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::domain("heat-trace zeta", format!("bad window [{lo}, {hi}]")));
    }
    let n = builder.n();
    let table = SpectralTable::from_builder(&builder, lo * WINDOW_SHIFT, &settings.spectral, exec)?;
    let main_ts = geometric_grid(lo, hi, settings.samples);
    let alt_ts = geometric_grid(lo * WINDOW_SHIFT, hi * WINDOW_SHIFT, settings.samples);
    let basis = FitBasis::standard(n, settings.order, false);
    let higher = FitBasis::standard(n, settings.order + 1, false);
    let with_log = FitBasis::standard(n, settings.order, true);
    let tail = table.tail_bound(lo * WINDOW_SHIFT);
    let mut results = [ZetaResult::empty(0), ZetaResult::empty(1)];
    let mut fits: [Option<SmallTimeFit>; 2] = [None, None];
    for grade in 0..2 {
        let (zp, fit) = continued_derivative(&table, grade, &main_ts, n, &basis, exec)?;
        let (zp_hi, _) = continued_derivative(&table, grade, &main_ts, n, &higher, exec)?;
        let (zp_alt, _) = continued_derivative(&table, grade, &alt_ts, n, &basis, exec)?;
        let values: Vec<f64> = main_ts.iter().map(|&t| table.partial_trace(grade, t, exec)).collect();
        let log_fit = small_time_fit(&main_ts, &values, n, &with_log)?;
        let residue = -log_fit.log_coeff.unwrap_or(0.0);
        let spread = (zp - zp_hi).abs().max((zp - zp_alt).abs());
        let err = spread + tail * (2.0 + hi.ln().abs()) + 1e-14 * (1.0 + zp.abs());
        results[grade] = ZetaResult::new(grade, fit.coefficient(0.0), zp, residue, err);
        fits[grade] = Some(fit);
    }
    let [f0, f1] = fits;
    Ok(HeatTraceZeta { results, fits: [f0.unwrap(), f1.unwrap()], table })
}

/// Exact route for both grades; fails when some block has no exact profile.
pub fn exact_logdets(spec: &ComplexSpec) -> Result<[ZetaResult; 2]> {
    let builder = ModeBuilder::new(spec)?;
    let profiles = builder.exact_profiles().ok_or_else(|| {
        Error::domain("exact zeta", "spectrum is not a shifted quadratic form; use the heat-trace method")
    })?;
    Ok([epstein_logdet(&profiles, 0)?, epstein_logdet(&profiles, 1)?])
}

/// Does the spec admit the exact route?
pub fn has_exact_route(spec: &ComplexSpec) -> bool {
    ModeBuilder::new(spec).map(|b| b.exact_profiles().is_some()).unwrap_or(false)
}

/// Both grades by the chosen method.
pub fn logdets<E: Executor>(
    spec: &ComplexSpec,
    method: Method,
    settings: &HeatTraceSettings,
    exec: &E,
) -> Result<[ZetaResult; 2]> {
    match method {
        Method::Auto if has_exact_route(spec) => exact_logdets(spec),
        Method::Auto => Ok(heat_trace_logdets(spec, settings, exec)?.results),
        Method::Exact => exact_logdets(spec),
        Method::HeatTrace => Ok(heat_trace_logdets(spec, settings, exec)?.results),
        Method::CrossChecked => {
            let exact = exact_logdets(spec)?;
            let ht = heat_trace_logdets(spec, settings, exec)?.results;
            for k in 0..2 {
                let diff = (exact[k].zeta_prime0 - ht[k].zeta_prime0).abs();
                let tol = (10.0 * ht[k].err).max(1e-5);
                if diff > tol {
                    return Err(Error::consistency(
                        "zeta cross-check",
                        format!(
                            "grade {k}: exact ζ′(0) = {:.12e}, heat-trace ζ′(0) = {:.12e} (differ by {diff:.3e} > {tol:.3e})",
                            exact[k].zeta_prime0, ht[k].zeta_prime0
                        ),
                    ));
                }
            }
            let mut out = exact;
            for k in 0..2 {
                out[k].err = out[k].err.max((exact[k].zeta_prime0 - ht[k].zeta_prime0).abs());
                out[k].residue0 = ht[k].residue0;
            }
            Ok(out)
        }
    }
}

/// One grade by the chosen method.
pub fn logdet_partial<E: Executor>(
    spec: &ComplexSpec,
    grade: usize,
    method: Method,
    settings: &HeatTraceSettings,
    exec: &E,
) -> Result<ZetaResult> {
    if grade > 1 {
        return Err(Error::domain("log det", "grade must be 0 or 1"));
    }
    Ok(logdets(spec, method, settings, exec)?[grade])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularityCheck {
    pub grade: usize,
    pub residue: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const DEFAULT_RESIDUE_TOL: f64 = 1e-3;

/// Fits a `log t` term alongside the power expansion; its coefficient is
/// minus the residue of `ζ(s, D_k†D_k)` at `s = 0`.
pub fn zeta_regularity_check<E: Executor>(
    spec: &ComplexSpec,
    grade: usize,
    tolerance: f64,
    settings: &HeatTraceSettings,
    exec: &E,
) -> Result<RegularityCheck> {
    let r = logdet_partial(spec, grade, Method::HeatTrace, settings, exec)?;
    Ok(RegularityCheck { grade, residue: r.residue0, tolerance, pass: r.residue0.abs() < tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::ConstantForm;
    use crate::geometry::{Character, FlatTorus};
    use crate::Sequential;
    use alloc::vec;

    /// Hurwitz ζ(s, a) by Euler–Maclaurin, for the derivative oracle.
    fn hurwitz_em(s: f64, a: f64) -> f64 {
        let n = 20usize;
        let mut sum = 0.0;
        for k in 0..n {
            sum += (k as f64 + a).powf(-s);
        }
        let x = n as f64 + a;
        sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
        // Bernoulli corrections B_{2j}/(2j)! · (s)_{2j−1} x^{−s−2j+1}
        let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
        let mut poch = s;
        let mut fact = 2.0;
        for (j, bj) in b.iter().enumerate() {
            let p = 2 * j + 1;
            sum += bj / fact * poch * x.powf(-s - p as f64);
            poch *= (s + p as f64) * (s + p as f64 + 1.0);
            fact *= ((p + 2) * (p + 3)) as f64;
        }
        sum
    }

    #[test]
    fn hurwitz_closed_form_against_euler_maclaurin() {
        for a in [0.25, 0.5, 0.37] {
            let h = 1e-5;
            let d = |a: f64| (hurwitz_em(h, a) - hurwitz_em(-h, a)) / (2.0 * h);
            let z0 = |a: f64| hurwitz_em(0.0, a);
            // log Det of 4π²(m+a)² over m ∈ ℤ: the two half-lattices a and 1−a,
            // each contributing −2ζ′_H(0) + 2 log(2π) ζ_H(0).
            let ld = -2.0 * (d(a) + d(1.0 - a)) + 2.0 * (2.0 * PI).ln() * (z0(a) + z0(1.0 - a));
            assert!((hurwitz_logdet(a).unwrap() - ld).abs() < 1e-8, "a={a}");
        }
        assert!((hurwitz_logdet(0.5).unwrap() - 4f64.ln()).abs() < 1e-14);
        assert!((hurwitz_logdet(0.25).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert_eq!(hurwitz_logdet(1.0).unwrap(), 0.0);
        assert!(hurwitz_logdet(0.0).is_err());
    }

    #[test]
    fn riemann_values_from_epstein() {
        // n = 1, B = 1, u = 0 is 2ζ(2s): Z(0) = −1, Z′(0) = −2 log 2π.
        let (z0, zp) = epstein_at_zero(&RMatrix::identity(1), &[0.0]).unwrap();
        assert!((z0 + 1.0).abs() < 1e-15);
        assert!((zp + 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
        let z2 = epstein_zeta(&RMatrix::identity(1), &[0.0], 1.0).unwrap();
        assert!((z2 - PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn square_lattice_spot_value() {
        // 4 ζ(2) β(2), β(2) = Catalan's constant.
        let catalan = 0.915_965_594_177_219_0;
        let expect = 4.0 * PI * PI / 6.0 * catalan;
        let z = epstein_zeta(&RMatrix::identity(2), &[0.0, 0.0], 2.0).unwrap();
        assert!((z - expect).abs() < 1e-12, "{z} {expect}");
        assert!((z - 6.026812).abs() < 1e-6);
    }

    #[test]
    fn circle_epstein_matches_hurwitz() {
        let b = RMatrix::identity(1).scale(4.0 * PI * PI);
        for a in [0.25, 0.5, 0.1] {
            let (_, zp) = epstein_at_zero(&b, &[a]).unwrap();
            assert!((-zp - hurwitz_logdet(a).unwrap()).abs() < 1e-12);
        }
        let (_, zp) = epstein_at_zero(&b, &[0.0]).unwrap();
        assert!(zp.abs() < 1e-12);
    }

    #[test]
    fn scaling_law() {
        let b = RMatrix::from_rows(&[vec![1.3, 0.2], vec![0.2, 0.8]]).unwrap();
        for u in [[0.0, 0.0], [0.3, 0.1]] {
            let (z0, zp) = epstein_at_zero(&b, &u).unwrap();
            let c = 2.7f64;
            let (z0c, zpc) = epstein_at_zero(&b.scale(c), &u).unwrap();
            assert!((z0 - z0c).abs() < 1e-14);
            assert!((zpc - (zp - c.ln() * z0)).abs() < 1e-11);
        }
    }

    #[test]
    fn direct_sum_against_general_s() {
        let b = RMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let u = [0.2, 0.7];
        let mut direct = 0.0;
        for i in -400i32..=400 {
            for j in -400i32..=400 {
                let x = [i as f64 + u[0], j as f64 + u[1]];
                let q = b.quad_form(&x);
                direct += q.powf(-3.0);
            }
        }
        let z = epstein_zeta(&b, &u, 3.0).unwrap();
        assert!((z - direct).abs() < 1e-9 * z, "{z} {direct}");
    }

    #[test]
    fn circle_heat_trace_route() {
        let spec = ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[0.25]).unwrap();
        let ht = heat_trace_logdets(&spec, &HeatTraceSettings::default(), &Sequential).unwrap();
        assert!((ht.results[0].log_det_prime - 2f64.ln()).abs() < 1e-8, "{:?}", ht.results[0]);
        assert!(ht.results[0].err < 1e-6);
        assert_eq!(ht.results[1].log_det_prime, 0.0);
        assert!(ht.results[0].residue0.abs() < 1e-6);
        let exact = exact_logdets(&spec).unwrap();
        assert!((exact[0].log_det_prime - 2f64.ln()).abs() < 1e-12);
        assert_eq!(exact[1].log_det_prime, 0.0);
        logdets(&spec, Method::CrossChecked, &HeatTraceSettings::default(), &Sequential).unwrap();
    }

    #[test]
    fn t2_routes_agree() {
        let g = RMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 1.4]]).unwrap();
        for u in [[0.0, 0.0], [0.31, 0.17]] {
            let spec = ComplexSpec::flat_de_rham(FlatTorus::new(g.clone()).unwrap(), &u).unwrap();
            let exact = exact_logdets(&spec).unwrap();
            let ht = heat_trace_logdets(&spec, &HeatTraceSettings::default(), &Sequential).unwrap();
            for k in 0..2 {
                let d = (exact[k].zeta_prime0 - ht.results[k].zeta_prime0).abs();
                assert!(d < 1e-7, "u={u:?} grade {k}: {d:e}");
                assert!((exact[k].zeta0 - ht.results[k].zeta0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn t3_flux_is_regular_at_zero() {
        let spec = ComplexSpec::de_rham(
            FlatTorus::identity(3),
            ConstantForm::volume(3, 1.0),
            Character::new(&[0.31, 0.17, 0.43]).unwrap(),
        )
        .unwrap();
        assert!(!has_exact_route(&spec));
        for grade in 0..2 {
            let r =
                zeta_regularity_check(&spec, grade, DEFAULT_RESIDUE_TOL, &HeatTraceSettings::default(), &Sequential)
                    .unwrap();
            assert!(r.pass, "{r:?}");
        }
    }
}
