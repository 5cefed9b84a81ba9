//! Special functions: incomplete gamma and E₁ for the zeta continuations,
//! and the modular objects of the complex-torus closed form (Dedekind η,
//! Jacobi θ₁ as a bilateral product and as a sine series).

use alloc::format;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{C64, I};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Truncation threshold for q-products and series.
const Q_EPS: f64 = 1e-18;
/// Hard cap on the number of product factors.
const MAX_FACTORS: usize = 500;

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Lower incomplete gamma γ(a, x) for a > 0 by its power series.
fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln()).exp()
}

/// Γ(a, x) by the Legendre continued fraction (modified Lentz). Converges
/// for every real a when x is not small.
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln()).exp() * h
}

/// E₁(x) = Γ(0, x) for x > 0.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NAN;
    }
    if x >= 1.0 {
        return upper_gamma_cf(0.0, x);
    }
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -x / k as f64;
        let t = -term / k as f64;
        sum += t;
        if t.abs() < 1e-18 {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

/// Upper incomplete gamma Γ(a, x) for real a and x > 0 (x = 0 allowed when
/// a > 0). Negative orders go through the downward recurrence
/// Γ(a, x) = (Γ(a+1, x) − xᵃ e^{−x}) / a.
pub fn upper_incomplete_gamma(a: f64, x: f64) -> f64 {
    if x < 0.0 || x.is_nan() || a.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return if a > 0.0 { gamma(a) } else { f64::INFINITY };
    }
    if x >= 1.0 && x >= a - 1.0 {
        return upper_gamma_cf(a, x);
    }
    if a > 0.0 {
        if x < a + 1.0 {
            return gamma(a) - lower_gamma_series(a, x);
        }
        return upper_gamma_cf(a, x);
    }
    // a ≤ 0 and x < 1: recurse down from an order in (0, 1] or from 0.
    let steps = (-a).floor() as i64;
    let frac = a + steps as f64;
    let mut order;
    let mut val;
    if frac == 0.0 {
        order = 0.0;
        val = exp_integral_e1(x);
    } else {
        order = frac + 1.0;
        val = gamma(order) - lower_gamma_series(order, x);
    }
    while order > a + 0.5 {
        order -= 1.0;
        val = (val - x.powf(order) * (-x).exp()) / order;
    }
    val
}

/// Point in the upper half plane with an elliptic argument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModularPoint {
    pub tau: C64,
    pub w: C64,
}

impl ModularPoint {
    pub fn new(tau: C64, w: C64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { tau, w })
    }

    /// `|q|` with `q = e^{2πiτ}`.
    pub fn nome_abs(&self) -> f64 {
        (-2.0 * PI * self.tau.im).exp()
    }
}

fn check_tau(tau: C64) -> Result<()> {
    if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
        return Err(Error::domain("modular function", format!("Im τ must be positive, got {tau}")));
    }
    Ok(())
}

/// Dedekind η(τ) = q^{1/24} Π_{k≥1} (1 − q^k), principal branch
/// q^{1/24} = e^{πiτ/12}.
pub fn dedekind_eta(tau: C64) -> Result<C64> {
    check_tau(tau)?;
    let q = (I * 2.0 * PI * tau).exp();
    let qa = q.norm();
    let mut prod = C64::new(1.0, 0.0);
    let mut qk = q;
    let mut qk_abs = qa;
    for _ in 0..MAX_FACTORS {
        if qk_abs < Q_EPS {
            break;
        }
        prod *= C64::new(1.0, 0.0) - qk;
        qk *= q;
        qk_abs *= qa;
    }
    Ok((I * PI * tau / 12.0).exp() * prod)
}

/// θ₁ as the bilateral product
/// `−η(τ) e^{πi(w+τ/6)} Π_{k∈ℤ} (1 − e^{2πi(|k|τ − ε_k w)})`, ε_k = sign(k + ½).
///
/// The truncation keeps k and −1−k together (k = −K−1 … K), which keeps the
/// product exactly odd in w at every K.
pub fn theta1_product(w: C64, tau: C64) -> Result<C64> {
    check_tau(tau)?;
    let qa = (-2.0 * PI * tau.im).exp();
    let z_growth = (2.0 * PI * w.im.abs()).exp();
    let mut pairs = 1usize;
    let mut bound = qa * z_growth;
    while bound >= Q_EPS && 2 * pairs < MAX_FACTORS {
        bound *= qa;
        pairs += 1;
    }
    let one = C64::new(1.0, 0.0);
    let mut prod = one;
    for j in 0..pairs {
        let jf = j as f64;
        // k = j ≥ 0: ε = +1; k = −1−j: |k| = j+1, ε = −1.
        prod *= one - (I * 2.0 * PI * (tau * jf - w)).exp();
        prod *= one - (I * 2.0 * PI * (tau * (jf + 1.0) + w)).exp();
    }
    let eta = dedekind_eta(tau)?;
    Ok(-eta * (I * PI * (w + tau / 6.0)).exp() * prod)
}

/// Classical series θ₁(w|τ) = 2 Σ_{k≥0} (−1)^k e^{iπτ(k+½)²} sin((2k+1)πw).
///
/// The bilateral product above equals `−i` times this series; the constant
/// phase comes from the prefactor convention and drops out of |θ₁|.
pub fn theta1_series(w: C64, tau: C64) -> Result<C64> {
    check_tau(tau)?;
    let mut sum = C64::new(0.0, 0.0);
    for k in 0..MAX_FACTORS {
        let kf = k as f64 + 0.5;
        let mag = (-PI * tau.im * kf * kf + 2.0 * kf * PI * w.im.abs()).exp();
        let term = (I * PI * tau * kf * kf).exp() * (w * (2.0 * kf * PI)).sin();
        sum += if k % 2 == 0 { term } else { -term };
        if k > 0 && mag < Q_EPS * 1e-2 {
            break;
        }
    }
    Ok(sum * 2.0)
}

/// Holomorphic torsion of the complex torus with the flat line bundle of
/// character (u, v): `|e^{πi v² τ} θ₁(u − τv, τ) / η(τ)|`.
pub fn kronecker_torsion(u: f64, v: f64, tau: C64) -> Result<f64> {
    check_tau(tau)?;
    if !u.is_finite() || !v.is_finite() {
        return Err(Error::domain("kronecker torsion", "non-finite character"));
    }
    if u == u.round() && v == v.round() {
        return Err(Error::domain(
            "kronecker torsion",
            "trivial character: cohomology does not vanish and the closed form does not apply",
        ));
    }
    let w = C64::new(u, 0.0) - tau * v;
    let th = theta1_product(w, tau)?;
    let eta = dedekind_eta(tau)?;
    let pre = (I * PI * v * v * tau).exp();
    Ok((pre * th / eta).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incomplete_gamma_special_cases() {
        // Γ(1, x) = e^{−x}
        for x in [0.01f64, 0.5, 1.0, 3.0, 20.0] {
            assert!((upper_incomplete_gamma(1.0, x) - (-x).exp()).abs() < 1e-15 * (1.0 + (-x).exp()));
        }
        // Γ(½, x) = √π erfc(√x)
        for x in [0.05f64, 0.7, 2.0, 9.0] {
            let expect = PI.sqrt() * libm::erfc(x.sqrt());
            assert!((upper_incomplete_gamma(0.5, x) - expect).abs() < 1e-14 * expect.max(1e-300) + 1e-16);
        }
        // Γ(0, x) + Γ(−1, x) = x^{−1} e^{−x}
        for x in [0.2f64, 0.9, 1.5, 6.0] {
            let lhs = upper_incomplete_gamma(0.0, x) + upper_incomplete_gamma(-1.0, x);
            assert!((lhs - (-x).exp() / x).abs() < 1e-13 * lhs.abs());
        }
        // Recurrence at a non-integer negative order.
        for x in [0.3f64, 2.5] {
            let a = -1.3;
            let lhs = upper_incomplete_gamma(a + 1.0, x);
            let rhs = a * upper_incomplete_gamma(a, x) + x.powf(a) * (-x).exp();
            assert!((lhs - rhs).abs() < 1e-13 * lhs.abs());
        }
    }

    #[test]
    fn e1_matches_quadrature() {
        // E₁(x) = ∫_1^∞ e^{−xt}/t dt, via the substitution t = 1/s, Simpson on (0, 1].
        for x in [0.1f64, 0.5, 1.0, 2.0, 5.0] {
            let n = 20_000;
            let h = 1.0 / n as f64;
            let f = |s: f64| if s == 0.0 { 0.0 } else { (-x / s).exp() / s };
            let mut acc = f(0.0) + f(1.0);
            for i in 1..n {
                acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = acc * h / 3.0;
            assert!((exp_integral_e1(x) - quad).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn eta_at_i() {
        let eta = dedekind_eta(I).unwrap();
        let closed = gamma(0.25) / (2.0 * PI.powf(0.75));
        assert!((eta.re - closed).abs() < 1e-14 && eta.im.abs() < 1e-15, "{eta} {closed}");
        assert!((eta.re - 0.768_225_422_326_057).abs() < 1e-14);
    }

    #[test]
    fn eta_shift() {
        let tau = C64::new(0.2, 0.9);
        let a = dedekind_eta(tau + 1.0).unwrap();
        let b = (I * PI / 12.0).exp() * dedekind_eta(tau).unwrap();
        assert!((a - b).norm() < 1e-14);
        assert!(dedekind_eta(C64::new(0.0, -1.0)).is_err());
        // Small |q|: η ≈ q^{1/24}.
        let t = C64::new(0.1, 8.0);
        let approx = (I * PI * t / 12.0).exp();
        assert!(
            ((dedekind_eta(t).unwrap() - approx) / approx).norm() < 1e-20f64.max((-2.0 * PI * 8.0f64).exp() * 1.01)
        );
    }

    #[test]
    fn theta1_is_odd_and_vanishes_at_zero() {
        let tau = C64::new(0.3, 0.8);
        assert!(theta1_product(C64::new(0.0, 0.0), tau).unwrap().norm() < 1e-15);
        for w in [C64::new(0.2, 0.0), C64::new(0.1, 0.3), C64::new(-0.4, 0.05)] {
            let a = theta1_product(w, tau).unwrap();
            let b = theta1_product(-w, tau).unwrap();
            assert!((a + b).norm() < 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn product_matches_series_up_to_constant_phase() {
        for re in [0.0, 0.25, 0.5] {
            for im in [0.7, 1.0, 1.6] {
                let tau = C64::new(re, im);
                for w in [C64::new(0.13, 0.0), C64::new(0.4, 0.2), C64::new(0.77, -0.1)] {
                    let p = theta1_product(w, tau).unwrap();
                    let s = theta1_series(w, tau).unwrap();
                    assert!((p - (-I) * s).norm() < 1e-12 * s.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn kronecker_torsion_periodicity() {
        let tau = C64::new(0.5, 1.0);
        let base = kronecker_torsion(0.3, 0.2, tau).unwrap();
        assert!((kronecker_torsion(1.3, 0.2, tau).unwrap() - base).abs() < 1e-9);
        assert!((kronecker_torsion(0.3, 1.2, tau).unwrap() - base).abs() < 1e-9);
        assert!(kronecker_torsion(0.0, 0.0, tau).is_err());
        // v = 0: the prefactor is 1.
        let t = C64::new(0.0, 1.0);
        let k = kronecker_torsion(0.5, 0.0, t).unwrap();
        let direct = (theta1_product(C64::new(0.5, 0.0), t).unwrap() / dedekind_eta(t).unwrap()).norm();
        assert!((k - direct).abs() < 1e-15);
    }
}
