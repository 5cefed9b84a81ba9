//! Mode spectra, Betti numbers, heat traces and small-time fits.
//!
//! A `SpectralTable` holds the nonzero spectra of `D₀†D₀` and `D₁†D₁` over
//! every mode inside a cutoff radius, flattened in mode order. Heat traces
//! at any `t` above the table's design time are then plain compensated sums,
//! with a rigorous Gaussian bound on the part of the spectrum left out.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::complex::{block_gram, ComplexSpec, ModeBuilder, ModeOperator};
use crate::error::{Error, Result};
use crate::exec::{deterministic_sum, deterministic_sums, Executor, DEFAULT_CHUNK};
use crate::exterior::binomial;
use crate::geometry::{shortest_vector_sq, Mode, DEFAULT_MODE_LIMIT};
use crate::linalg::{hermitian_eigen, hermitian_eigenvalues, least_squares, CMatrix, RMatrix, C64};
use crate::special::{gamma, upper_incomplete_gamma};

/// Relative kernel threshold: μ counts as zero iff `μ < KERNEL_REL·(1 + Q)`.
pub const KERNEL_REL: f64 = 1e-10;

pub fn kernel_threshold(q: f64) -> f64 {
    KERNEL_REL * (1.0 + q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpectrum {
    pub m: Mode,
    /// Nonzero eigenvalues of `D₀†D₀`, ascending within each block.
    pub spec0: Vec<f64>,
    pub spec1: Vec<f64>,
    pub ker0: usize,
    pub ker1: usize,
}

fn eig_error(m: &Mode, e: Error) -> Error {
    Error::consistency("mode spectrum", format!("eigensolver failed at mode {m:?}: {e}"))
}

/// Squared singular values of `D₀`, `D₁` per mode, kernel dimensions by
/// rank–nullity.
pub fn mode_spectrum(op: &ModeOperator) -> Result<ModeSpectrum> {
    let mut out = ModeSpectrum { m: op.m, spec0: Vec::new(), spec1: Vec::new(), ker0: 0, ker1: 0 };
    for b in &op.blocks {
        let thr = kernel_threshold(b.q);
        let e0 = hermitian_eigenvalues(&b.d0.gram()).map_err(|e| eig_error(&op.m, e))?;
        let e1 = hermitian_eigenvalues(&b.d1.gram()).map_err(|e| eig_error(&op.m, e))?;
        let r0 = e0.iter().filter(|&&x| x > thr).count();
        let r1 = e1.iter().filter(|&&x| x > thr).count();
        let (dim_even, dim_odd) = (b.d0.cols(), b.d0.rows());
        if r0 + r1 > dim_even.min(dim_odd) {
            return Err(Error::consistency(
                "mode spectrum",
                format!("rank of D₀ + rank of D₁ exceeds the block size at mode {:?}", op.m),
            ));
        }
        out.spec0.extend(e0.into_iter().filter(|&x| x > thr));
        out.spec1.extend(e1.into_iter().filter(|&x| x > thr));
        out.ker0 += dim_even - r0 - r1;
        out.ker1 += dim_odd - r0 - r1;
    }
    Ok(out)
}

/// Eigenvalues of the assembled `L₀ = D₀†D₀ + D₁D₁†` and
/// `L₁ = D₁†D₁ + D₀D₀†`, computed directly (the independent route).
pub fn laplacian_spectrum(op: &ModeOperator) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut l0, mut l1) = (Vec::new(), Vec::new());
    for b in &op.blocks {
        let a = b.d0.gram().add(&b.d1.outer_gram());
        let c = b.d1.gram().add(&b.d0.outer_gram());
        l0.extend(hermitian_eigenvalues(&a).map_err(|e| eig_error(&op.m, e))?);
        l1.extend(hermitian_eigenvalues(&c).map_err(|e| eig_error(&op.m, e))?);
    }
    Ok((l0, l1))
}

fn count_kernel(op: &ModeOperator, values: &[f64], even: bool) -> usize {
    let mut idx = 0;
    let mut count = 0;
    for b in &op.blocks {
        let dim = if even { b.d0.cols() } else { b.d0.rows() };
        let thr = kernel_threshold(b.q);
        count += values[idx..idx + dim].iter().filter(|&&x| x < thr).count();
        idx += dim;
    }
    count
}

#[derive(Clone, Debug, PartialEq)]
pub struct BettiData {
    pub b0: usize,
    pub b1: usize,
    pub chi: i64,
    /// Kernel certificate radius used, in units of `sqrt(ξᵀBξ)`.
    pub certificate: f64,
}

/// Betti numbers from the finitely many modes inside the kernel certificate.
/// Each candidate mode is checked by rank–nullity and by the assembled
/// Laplacians; disagreement is an error.
pub fn betti_numbers(spec: &ComplexSpec) -> Result<BettiData> {
    let builder = ModeBuilder::new(spec)?;
    betti_from_builder(&builder, builder.kernel_radius())
}

fn betti_from_builder(builder: &ModeBuilder, radius: f64) -> Result<BettiData> {
    let certificate = builder.kernel_radius();
    let r = radius.max(certificate) * (1.0 + 1e-9) + 1e-9;
    let modes = builder.enumerate(r * r, DEFAULT_MODE_LIMIT)?;
    let (mut b0, mut b1) = (0, 0);
    for m in modes {
        let op = builder.operator(m);
        let ms = mode_spectrum(&op)?;
        if ms.ker0 + ms.ker1 == 0 {
            continue;
        }
        let (l0, l1) = laplacian_spectrum(&op)?;
        let (k0, k1) = (count_kernel(&op, &l0, true), count_kernel(&op, &l1, false));
        if (k0, k1) != (ms.ker0, ms.ker1) {
            return Err(Error::consistency(
                "betti numbers",
                format!("kernel of L at mode {m:?} is ({k0}, {k1}) but rank–nullity gives ({}, {})", ms.ker0, ms.ker1),
            ));
        }
        b0 += ms.ker0;
        b1 += ms.ker1;
    }
    Ok(BettiData { b0, b1, chi: b0 as i64 - b1 as i64, certificate })
}

/// Betti numbers counted over a larger radius than the certificate; used to
/// check cutoff stability.
pub fn betti_numbers_with_radius(spec: &ComplexSpec, radius: f64) -> Result<BettiData> {
    let builder = ModeBuilder::new(spec)?;
    betti_from_builder(&builder, radius)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatTraceSample {
    pub t: f64,
    pub tr0: f64,
    pub tr1: f64,
    pub tr_d0: f64,
    pub tr_d1: f64,
    pub str: f64,
    pub tail_bound: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralOptions {
    /// Absolute bound on the truncation error of every trace at the design
    /// time.
    pub tail_tol: f64,
    pub mode_limit: usize,
    pub chunk: usize,
    /// Also diagonalize the assembled Laplacians (needed for the
    /// McKean–Singer check, not for determinants).
    pub laplacians: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { tail_tol: 1e-12, mode_limit: DEFAULT_MODE_LIMIT, chunk: 256, laplacians: false }
    }
}

/// Data for the Gaussian tail bound of one block.
#[derive(Clone, Debug, PartialEq)]
struct TailParams {
    dim: f64,
    det_b: f64,
    cell: f64,
    a: f64,
}

impl TailParams {
    fn of(builder: &ModeBuilder) -> Vec<TailParams> {
        builder
            .blocks
            .iter()
            .map(|b| {
                let n = b.symbol_form.rows();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += b.symbol_form[(i, j)].abs();
                    }
                }
                TailParams {
                    dim: (b.dim_even() + b.dim_odd()) as f64,
                    det_b: b.symbol_form.det(),
                    cell: 0.5 * s.sqrt(),
                    a: b.a_norm,
                }
            })
            .collect()
    }

    /// Bound on `Σ e^{−tμ}` over all eigenvalues of modes with
    /// `sqrt(ξᵀBξ) > radius`: every such eigenvalue is at least
    /// `(sqrt(ξᵀBξ) − a)²`, and lattice points are compared with the volume
    /// of shells widened by the cell radius.
    fn bound(&self, n: usize, t: f64, radius: f64) -> f64 {
        let w0 = radius - 2.0 * self.cell - self.a;
        if w0 <= 0.0 {
            return f64::INFINITY;
        }
        let nf = n as f64;
        let sphere = 2.0 * PI.powf(nf / 2.0) / gamma(nf / 2.0);
        let shift = self.cell + self.a;
        let mut integral = 0.0;
        for j in 0..n {
            let jf = j as f64;
            let moment = 0.5 * t.powf(-(jf + 1.0) / 2.0) * upper_incomplete_gamma((jf + 1.0) / 2.0, t * w0 * w0);
            integral += binomial(n - 1, j) as f64 * shift.powi((n - 1 - j) as i32) * moment;
        }
        self.dim * sphere * integral / self.det_b.sqrt()
    }
}

fn tail_total(params: &[TailParams], n: usize, t: f64, radius: f64) -> f64 {
    params.iter().map(|p| p.bound(n, t, radius)).sum()
}

/// Smallest radius (in `sqrt(ξᵀBξ)` units) whose tail bound at `t` is below
/// `tol`.
fn radius_for(params: &[TailParams], n: usize, t: f64, tol: f64, floor: f64) -> f64 {
    let base = params.iter().map(|p| 2.0 * p.cell + p.a).fold(0.0, f64::max);
    let mut r = (base + (30.0 / t).sqrt()).max(floor);
    while tail_total(params, n, t, r) > tol {
        r *= 1.05;
    }
    r
}

fn estimated_modes(params: &[TailParams], n: usize, radius: f64) -> f64 {
    let nf = n as f64;
    let ball = PI.powf(nf / 2.0) / gamma(nf / 2.0 + 1.0);
    params.iter().map(|p| ball * (radius + p.cell).powf(nf) / p.det_b.sqrt()).sum()
}

/// Flattened nonzero spectra over all modes inside a cutoff radius.
#[derive(Clone, Debug)]
pub struct SpectralTable {
    pub n: usize,
    pub radius: f64,
    /// Smallest `t` at which the recorded tail bound meets the tolerance.
    pub t_min: f64,
    pub modes: usize,
    pub lam0: Vec<f64>,
    pub lam1: Vec<f64>,
    /// Nonzero eigenvalues of the assembled `L₀`, `L₁` when requested.
    pub laplacians: Option<(Vec<f64>, Vec<f64>)>,
    pub betti: BettiData,
    pub chunk: usize,
    tails: Vec<TailParams>,
}

struct ChunkOut {
    lam0: Vec<f64>,
    lam1: Vec<f64>,
    l0: Vec<f64>,
    l1: Vec<f64>,
    ker: (usize, usize),
    lker: (usize, usize),
}

impl SpectralTable {
    /// Builds the table so that traces at every `t ≥ t_min` carry a tail
    /// bound below `opts.tail_tol`.
    pub fn build<E: Executor>(spec: &ComplexSpec, t_min: f64, opts: &SpectralOptions, exec: &E) -> Result<Self> {
        let builder = ModeBuilder::new(spec)?;
        Self::from_builder(&builder, t_min, opts, exec)
    }

    pub fn from_builder<E: Executor>(
        builder: &ModeBuilder,
        t_min: f64,
        opts: &SpectralOptions,
        exec: &E,
    ) -> Result<Self> {
        if !(t_min > 0.0) || !t_min.is_finite() {
            return Err(Error::domain("heat trace", format!("t must be positive, got {t_min}")));
        }
        let n = builder.n();
        let tails = TailParams::of(builder);
        let certificate = builder.kernel_radius();
        let radius = radius_for(&tails, n, t_min, opts.tail_tol, certificate * 1.01 + 1e-6);
        if estimated_modes(&tails, n, radius) > opts.mode_limit as f64 {
            // Bisect for the smallest feasible t.
            let (mut lo, mut hi) = (t_min, t_min);
            while estimated_modes(&tails, n, radius_for(&tails, n, hi, opts.tail_tol, 0.0)) > opts.mode_limit as f64 {
                hi *= 2.0;
            }
            for _ in 0..40 {
                let mid = (lo * hi).sqrt();
                if estimated_modes(&tails, n, radius_for(&tails, n, mid, opts.tail_tol, 0.0)) > opts.mode_limit as f64 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Err(Error::resource(
                "heat trace",
                format!("t = {t_min:e} needs more than {} modes; smallest feasible t ≈ {hi:.3e}", opts.mode_limit),
            ));
        }
        let modes = builder.enumerate(radius * radius, opts.mode_limit)?;
        let laplacians = opts.laplacians;
        let parts = exec.map_chunks(&modes, opts.chunk, |chunk| -> Result<ChunkOut> {
            let mut out = ChunkOut {
                lam0: Vec::new(),
                lam1: Vec::new(),
                l0: Vec::new(),
                l1: Vec::new(),
                ker: (0, 0),
                lker: (0, 0),
            };
            for &m in chunk {
                let op = builder.operator(m);
                let ms = mode_spectrum(&op)?;
                out.lam0.extend_from_slice(&ms.spec0);
                out.lam1.extend_from_slice(&ms.spec1);
                out.ker.0 += ms.ker0;
                out.ker.1 += ms.ker1;
                if laplacians {
                    let (l0, l1) = laplacian_spectrum(&op)?;
                    out.lker.0 += count_kernel(&op, &l0, true);
                    out.lker.1 += count_kernel(&op, &l1, false);
                    let mut idx = 0;
                    for b in &op.blocks {
                        let thr = kernel_threshold(b.q);
                        let d = b.d0.cols();
                        out.l0.extend(l0[idx..idx + d].iter().filter(|&&x| x >= thr));
                        idx += d;
                    }
                    let mut idx = 0;
                    for b in &op.blocks {
                        let thr = kernel_threshold(b.q);
                        let d = b.d0.rows();
                        out.l1.extend(l1[idx..idx + d].iter().filter(|&&x| x >= thr));
                        idx += d;
                    }
                }
            }
            Ok(out)
        });
        let mut lam0 = Vec::new();
        let mut lam1 = Vec::new();
        let mut l0 = Vec::new();
        let mut l1 = Vec::new();
        let (mut k0, mut k1, mut lk0, mut lk1) = (0, 0, 0, 0);
        for p in parts {
            let p = p?;
            lam0.extend(p.lam0);
            lam1.extend(p.lam1);
            l0.extend(p.l0);
            l1.extend(p.l1);
            k0 += p.ker.0;
            k1 += p.ker.1;
            lk0 += p.lker.0;
            lk1 += p.lker.1;
        }
        if laplacians && (lk0, lk1) != (k0, k1) {
            return Err(Error::consistency(
                "spectral table",
                format!("Laplacian kernels ({lk0}, {lk1}) disagree with rank–nullity ({k0}, {k1})"),
            ));
        }
        let betti = BettiData { b0: k0, b1: k1, chi: k0 as i64 - k1 as i64, certificate };
        Ok(Self {
            n,
            radius,
            t_min,
            modes: modes.len(),
            lam0,
            lam1,
            laplacians: laplacians.then_some((l0, l1)),
            betti,
            chunk: DEFAULT_CHUNK,
            tails,
        })
    }

    /// Rigorous bound on the truncation error of each trace at `t`.
    pub fn tail_bound(&self, t: f64) -> f64 {
        tail_total(&self.tails, self.n, t, self.radius)
    }

    /// `Σ e^{−tλ}` over the nonzero spectrum of `D_k†D_k`.
    pub fn partial_trace<E: Executor>(&self, grade: usize, t: f64, exec: &E) -> f64 {
        let lam = if grade == 0 { &self.lam0 } else { &self.lam1 };
        deterministic_sum(exec, lam, self.chunk, |&x| (-t * x).exp())
    }

    pub fn sample<E: Executor>(&self, t: f64, exec: &E) -> HeatTraceSample {
        let tr_d0 = self.partial_trace(0, t, exec);
        let tr_d1 = self.partial_trace(1, t, exec);
        let (tr0, tr1) = match &self.laplacians {
            Some((l0, l1)) => {
                let a = deterministic_sum(exec, l0, self.chunk, |&x| (-t * x).exp());
                let b = deterministic_sum(exec, l1, self.chunk, |&x| (-t * x).exp());
                (a + self.betti.b0 as f64, b + self.betti.b1 as f64)
            }
            None => (tr_d0 + tr_d1 + self.betti.b0 as f64, tr_d0 + tr_d1 + self.betti.b1 as f64),
        };
        HeatTraceSample { t, tr0, tr1, tr_d0, tr_d1, str: tr0 - tr1, tail_bound: self.tail_bound(t) }
    }
}

/// One heat-trace sample, building a table sized for this `t`.
pub fn heat_trace<E: Executor>(
    spec: &ComplexSpec,
    t: f64,
    opts: &SpectralOptions,
    exec: &E,
) -> Result<HeatTraceSample> {
    let table = SpectralTable::build(spec, t, opts, exec)?;
    Ok(table.sample(t, exec))
}

/// Default small-time window `[t_hi/8, t_hi]` with `t_hi = π² ℓ²/40`, where
/// `ℓ²` is the shortest nonzero vector of the dual symbol form. The
/// exponentially small corrections to the power-law expansion are then
/// below `e^{−40}` of the leading term.
pub fn default_window(builder: &ModeBuilder) -> Result<(f64, f64)> {
    let mut l2 = f64::INFINITY;
    for b in &builder.blocks {
        l2 = l2.min(shortest_vector_sq(&b.symbol_form.inverse()?)?);
    }
    let t_hi = PI * PI * l2 / 40.0;
    Ok((t_hi / 8.0, t_hi))
}

pub const DEFAULT_SAMPLES: usize = 40;
pub const DEFAULT_ORDER: usize = 6;

pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let r = (hi / lo).ln();
    (0..count).map(|i| lo * (r * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Basis of the small-time fit: powers `t^p`, and optionally `log t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FitBasis {
    pub powers: Vec<f64>,
    pub log: bool,
}

impl FitBasis {
    /// `t^{j−n/2}` for `j = 0..=order`; odd `n` also gets `t⁰`.
    pub fn standard(n: usize, order: usize, log: bool) -> Self {
        let half = n as f64 / 2.0;
        let mut powers: Vec<f64> = (0..=order).map(|j| j as f64 - half).collect();
        if n % 2 == 1 {
            powers.push(0.0);
        }
        Self { powers, log }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmallTimeFit {
    pub powers: Vec<f64>,
    pub coeffs: Vec<f64>,
    /// Coefficient of `log t`, when the basis has it.
    pub log_coeff: Option<f64>,
    /// Relative residual of the weighted fit.
    pub residual: f64,
    pub cond: f64,
    pub window: (f64, f64),
}

/// Fit conditions above this are reported as ill-conditioned.
pub const MAX_FIT_COND: f64 = 1e13;

impl SmallTimeFit {
    pub fn coefficient(&self, p: f64) -> f64 {
        self.powers.iter().zip(&self.coeffs).filter(|(q, _)| (**q - p).abs() < 1e-12).map(|(_, c)| *c).sum()
    }
}

/// Least-squares fit of `values(t)` in `basis`, rows weighted by `t^{n/2}`
/// so every sample carries comparable relative weight.
pub fn small_time_fit(ts: &[f64], values: &[f64], n: usize, basis: &FitBasis) -> Result<SmallTimeFit> {
    let cols = basis.powers.len() + usize::from(basis.log);
    if ts.len() != values.len() || ts.len() < cols {
        return Err(Error::Shape { context: "small-time fit needs at least as many samples as basis functions" });
    }
    let half = n as f64 / 2.0;
    let a = RMatrix::from_fn(ts.len(), cols, |r, c| {
        let t = ts[r];
        let w = t.powf(half);
        if c < basis.powers.len() {
            w * t.powf(basis.powers[c])
        } else {
            w * t.ln()
        }
    });
    let b: Vec<f64> = ts.iter().zip(values).map(|(t, v)| t.powf(half) * v).collect();
    let (x, res, cond) = least_squares(&a, &b)?;
    if cond > MAX_FIT_COND {
        return Err(Error::consistency(
            "small-time fit",
            format!("condition number {cond:.2e} too large; widen the t-window or lower the order"),
        ));
    }
    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let np = basis.powers.len();
    Ok(SmallTimeFit {
        powers: basis.powers.clone(),
        coeffs: x[..np].to_vec(),
        log_coeff: basis.log.then(|| x[np]),
        residual: res / norm,
        cond,
        window: (ts[0], ts[ts.len() - 1]),
    })
}

/// Weighted spectra for `Str(α e^{−tL})`: eigenvalues of `L₀`, `L₁` paired
/// with the diagonal of `α̃` in the eigenbasis.
#[derive(Clone, Debug)]
pub struct WeightedTable {
    pub n: usize,
    pub radius: f64,
    pub lam0: Vec<(f64, f64)>,
    pub lam1: Vec<(f64, f64)>,
    /// `Str(αQ)`, the weighted supertrace over harmonic vectors.
    pub kernel_weight: f64,
    pub alpha_norm: f64,
    pub chunk: usize,
    tails: Vec<TailParams>,
}

/// `α̃ = S⁻¹ M′ S⁻¹` per block, split into even and odd parts.
pub fn alpha_blocks(spec: &ComplexSpec, builder: &ModeBuilder, dg: &RMatrix) -> Result<Vec<(CMatrix, CMatrix)>> {
    let g = spec.torus().gram().clone();
    builder
        .blocks
        .iter()
        .map(|b| {
            let (_, dm) = block_gram(&b.basis, &g, Some(dg))?;
            let dm = dm.expect("derivative requested");
            let a = b.s_inv.mul(&dm).mul(&b.s_inv);
            Ok((a.select(&b.even, &b.even), a.select(&b.odd, &b.odd)))
        })
        .collect()
}

impl WeightedTable {
    pub fn build<E: Executor>(
        spec: &ComplexSpec,
        dg: &RMatrix,
        t_min: f64,
        opts: &SpectralOptions,
        exec: &E,
    ) -> Result<Self> {
        let builder = ModeBuilder::new(spec)?;
        let alpha = alpha_blocks(spec, &builder, dg)?;
        let alpha_norm = alpha.iter().map(|(a, b)| a.op_norm().max(b.op_norm())).fold(0.0, f64::max);
        let n = builder.n();
        let tails = TailParams::of(&builder);
        let tol = opts.tail_tol / alpha_norm.max(1e-300);
        let radius = radius_for(&tails, n, t_min, tol, builder.kernel_radius() * 1.01 + 1e-6);
        if estimated_modes(&tails, n, radius) > opts.mode_limit as f64 {
            return Err(Error::resource("weighted supertrace", format!("t = {t_min:e} needs too many modes")));
        }
        let modes = builder.enumerate(radius * radius, opts.mode_limit)?;
        let parts = exec.map_chunks(&modes, opts.chunk, |chunk| -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>, f64)> {
            let (mut w0, mut w1, mut kw) = (Vec::new(), Vec::new(), 0.0);
            for &m in chunk {
                let op = builder.operator(m);
                for (b, (ae, ao)) in op.blocks.iter().zip(&alpha) {
                    let thr = kernel_threshold(b.q);
                    let l0 = b.d0.gram().add(&b.d1.outer_gram());
                    let l1 = b.d1.gram().add(&b.d0.outer_gram());
                    for (l, a, sign, out) in [(&l0, ae, 1.0, &mut w0), (&l1, ao, -1.0, &mut w1)] {
                        let eig = hermitian_eigen(l).map_err(|e| eig_error(&m, e))?;
                        let av = a.mul(&eig.vectors);
                        for (i, &mu) in eig.values.iter().enumerate() {
                            let mut w = C64::new(0.0, 0.0);
                            for r in 0..av.rows() {
                                w += eig.vectors[(r, i)].conj() * av[(r, i)];
                            }
                            if mu < thr {
                                kw += sign * w.re;
                            } else {
                                out.push((mu, w.re));
                            }
                        }
                    }
                }
            }
            Ok((w0, w1, kw))
        });
        let (mut lam0, mut lam1, mut kernel_weight) = (Vec::new(), Vec::new(), 0.0);
        for p in parts {
            let (a, b, k) = p?;
            lam0.extend(a);
            lam1.extend(b);
            kernel_weight += k;
        }
        Ok(Self { n, radius, lam0, lam1, kernel_weight, alpha_norm, chunk: DEFAULT_CHUNK, tails })
    }

    /// `Str(α e^{−tL})` and its tail bound.
    pub fn supertrace<E: Executor>(&self, t: f64, exec: &E) -> (f64, f64) {
        let [a] = deterministic_sums(exec, &self.lam0, self.chunk, |&(mu, w)| [w * (-t * mu).exp()]);
        let [b] = deterministic_sums(exec, &self.lam1, self.chunk, |&(mu, w)| [w * (-t * mu).exp()]);
        let tail = self.alpha_norm * tail_total(&self.tails, self.n, t, self.radius);
        (a - b + self.kernel_weight, tail)
    }
}

/// `Str(α e^{−tL})` at one `t`.
pub fn weighted_supertrace<E: Executor>(
    spec: &ComplexSpec,
    dg: &RMatrix,
    t: f64,
    opts: &SpectralOptions,
    exec: &E,
) -> Result<f64> {
    Ok(WeightedTable::build(spec, dg, t, opts, exec)?.supertrace(t, exec).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_mode_operator, ConstantForm};
    use crate::geometry::{Character, FlatTorus};
    use crate::Sequential;

    fn circle(u: f64) -> ComplexSpec {
        ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[u]).unwrap()
    }

    fn t3_flux(theta: f64, u: [f64; 3]) -> ComplexSpec {
        ComplexSpec::de_rham(FlatTorus::identity(3), ConstantForm::volume(3, theta), Character::new(&u).unwrap())
            .unwrap()
    }

    #[test]
    fn circle_mode_spectra() {
        let s = circle(0.25);
        let ms = mode_spectrum(&build_mode_operator(&s, Mode::new(&[2])).unwrap()).unwrap();
        assert_eq!((ms.ker0, ms.ker1), (0, 0));
        assert!(ms.spec1.is_empty());
        assert_eq!(ms.spec0.len(), 1);
        let expect = 4.0 * PI * PI * 2.25f64.powi(2);
        assert!((ms.spec0[0] - expect).abs() < 1e-10 * expect);

        let ms = mode_spectrum(&build_mode_operator(&circle(0.0), Mode::new(&[0])).unwrap()).unwrap();
        assert!(ms.spec0.is_empty() && ms.spec1.is_empty());
        assert_eq!((ms.ker0, ms.ker1), (1, 1));
    }

    #[test]
    fn t3_flux_zero_mode_kernel() {
        let s = t3_flux(0.7, [0.0; 3]);
        let op = build_mode_operator(&s, Mode::new(&[0, 0, 0])).unwrap();
        let ms = mode_spectrum(&op).unwrap();
        assert_eq!((ms.ker0, ms.ker1), (3, 3));
        let b = betti_numbers(&s).unwrap();
        assert_eq!((b.b0, b.b1, b.chi), (3, 3, 0));
        let wide = betti_numbers_with_radius(&s, 2.0 * b.certificate + 20.0).unwrap();
        assert_eq!((wide.b0, wide.b1), (b.b0, b.b1));
    }

    #[test]
    fn laplacian_route_matches_partial_spectra() {
        let s = t3_flux(1.0, [0.31, 0.17, 0.43]);
        let builder = ModeBuilder::new(&s).unwrap();
        for m in [[0, 0, 0], [1, -1, 0], [2, 1, -3]] {
            let op = builder.operator(Mode::new(&m));
            let ms = mode_spectrum(&op).unwrap();
            let (l0, _) = laplacian_spectrum(&op).unwrap();
            let mut expect: Vec<f64> = ms.spec0.iter().chain(&ms.spec1).copied().collect();
            expect.extend(core::iter::repeat_n(0.0, ms.ker0));
            expect.sort_by(f64::total_cmp);
            let mut got = l0.clone();
            got.sort_by(f64::total_cmp);
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{got:?} vs {expect:?}");
            }
        }
    }

    #[test]
    fn circle_betti() {
        let b = betti_numbers(&circle(0.0)).unwrap();
        assert_eq!((b.b0, b.b1, b.chi), (1, 1, 0));
        let b = betti_numbers(&circle(0.25)).unwrap();
        assert_eq!((b.b0, b.b1), (0, 0));
    }

    #[test]
    fn circle_heat_trace_against_poisson() {
        // Σ e^{−4π²(m+u)² t} = (4πt)^{−1/2} Σ_k cos(2πku) e^{−k²/(4t)}.
        let t = 0.1;
        let s = heat_trace(&circle(0.25), t, &SpectralOptions::default(), &Sequential).unwrap();
        let mut poisson = 1.0;
        for k in 1..50 {
            let kf = k as f64;
            poisson += 2.0 * (2.0 * PI * kf * 0.25).cos() * (-kf * kf / (4.0 * t)).exp();
        }
        poisson /= (4.0 * PI * t).sqrt();
        assert!((s.tr_d0 - poisson).abs() < 1e-12 + s.tail_bound);
        assert_eq!(s.tr_d1, 0.0);
        assert!(s.tail_bound < 1e-12);
    }

    #[test]
    fn mckean_singer_with_independent_laplacians() {
        let opts = SpectralOptions { laplacians: true, ..Default::default() };
        for spec in [circle(0.0), circle(0.3), t3_flux(1.0, [0.0; 3])] {
            let table = SpectralTable::build(&spec, 0.05, &opts, &Sequential).unwrap();
            for t in [0.05, 0.3, 5.0] {
                let s = table.sample(t, &Sequential);
                assert!((s.str - table.betti.chi as f64).abs() < 1e-8, "{s:?}");
            }
        }
    }

    #[test]
    fn tail_bound_is_honest() {
        // Trace at a small radius plus its bound must cover the converged value.
        let spec = t3_flux(0.5, [0.2, 0.1, 0.4]);
        let builder = ModeBuilder::new(&spec).unwrap();
        let t = 0.02;
        let full = SpectralTable::from_builder(&builder, t, &SpectralOptions::default(), &Sequential).unwrap();
        let loose = SpectralTable::from_builder(
            &builder,
            t,
            &SpectralOptions { tail_tol: 1e-2, ..Default::default() },
            &Sequential,
        )
        .unwrap();
        let exact = full.partial_trace(0, t, &Sequential);
        let approx = loose.partial_trace(0, t, &Sequential);
        assert!(loose.radius < full.radius);
        assert!(exact - approx <= loose.tail_bound(t));
        assert!(exact >= approx);
    }

    #[test]
    fn resource_error_names_feasible_t() {
        let spec = t3_flux(0.0, [0.2, 0.1, 0.4]);
        let opts = SpectralOptions { mode_limit: 1000, ..Default::default() };
        match SpectralTable::build(&spec, 1e-4, &opts, &Sequential) {
            Err(Error::Resource { detail, .. }) => assert!(detail.contains("smallest feasible t")),
            other => panic!("expected a resource error, got {other:?}"),
        }
    }

    #[test]
    fn fit_recovers_poisson_leading_term() {
        let spec = circle(0.0);
        let builder = ModeBuilder::new(&spec).unwrap();
        let (lo, hi) = default_window(&builder).unwrap();
        let table = SpectralTable::from_builder(&builder, lo, &SpectralOptions::default(), &Sequential).unwrap();
        let ts = geometric_grid(lo, hi, DEFAULT_SAMPLES);
        let vals: Vec<f64> = ts.iter().map(|&t| table.partial_trace(0, t, &Sequential)).collect();
        let fit = small_time_fit(&ts, &vals, 1, &FitBasis::standard(1, DEFAULT_ORDER, false)).unwrap();
        // (4πt)^{−1/2} − 1 (zero mode removed)
        assert!((fit.coefficient(-0.5) - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-10);
        assert!((fit.coefficient(0.0) + 1.0).abs() < 1e-8);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn weighted_supertrace_reductions() {
        let spec = circle(0.25);
        let opts = SpectralOptions::default();
        // dg = 2G: conformal, α = diag(+1, −1) on the circle.
        let dg = RMatrix::identity(1).scale(2.0);
        let t = 1.0;
        let got = weighted_supertrace(&spec, &dg, t, &opts, &Sequential).unwrap();
        let mut expect = 0.0;
        for m in -20..20 {
            let x = m as f64 + 0.25;
            expect += 2.0 * (-4.0 * PI * PI * x * x * t).exp();
        }
        assert!((got - expect).abs() < 1e-12, "{got} {expect}");
        let zero = weighted_supertrace(&spec, &RMatrix::zeros(1, 1), t, &opts, &Sequential).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn t3_supertrace_is_the_index() {
        let spec = t3_flux(0.6, [0.0; 3]);
        let builder = ModeBuilder::new(&spec).unwrap();
        let t = 0.2;
        let table = SpectralTable::from_builder(
            &builder,
            t,
            &SpectralOptions { laplacians: true, ..Default::default() },
            &Sequential,
        )
        .unwrap();
        let s = table.sample(t, &Sequential);
        assert!((s.str - 0.0).abs() < 1e-9);
        assert!(s.tr0 > 0.0 && s.tr1 > 0.0);
    }
}
