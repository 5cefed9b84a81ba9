//! Flat tori ℝⁿ/ℤⁿ, unitary characters of ℤⁿ, complex tori and metric
//! deformations.
//!
//! The lattice is always ℤⁿ; a general lattice is absorbed into the Gram
//! matrix by a change of basis.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::exterior::{binomial, mask_indices, ExteriorBasis, MAX_DIM};
use crate::linalg::{CMatrix, RMatrix, C64};

/// Flat metric `G_ij dxⁱ dxʲ` on ℝⁿ/ℤⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatTorus {
    gram: RMatrix,
    inverse: RMatrix,
    det: f64,
}

impl FlatTorus {
    pub fn new(gram: RMatrix) -> Result<Self> {
        let n = gram.rows();
        if n == 0 || gram.cols() != n {
            return Err(Error::domain("flat torus", "Gram matrix must be square and non-empty"));
        }
        if n > MAX_DIM {
            return Err(Error::domain("flat torus", format!("dimension {n} exceeds {MAX_DIM}")));
        }
        if gram.as_rows_iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("flat torus", "Gram matrix has non-finite entries"));
        }
        let scale = gram.max_abs().max(1.0);
        if gram.max_asymmetry() > 1e-14 * scale {
            return Err(Error::domain("flat torus", "Gram matrix is not symmetric"));
        }
        // Symmetrize exactly so downstream quadratic forms are bit-symmetric.
        let gram = RMatrix::from_fn(n, n, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
        let ev = gram.symmetric_eigenvalues()?;
        if ev[0] <= 0.0 {
            return Err(Error::domain(
                "flat torus",
                format!("Gram matrix is not positive definite (smallest eigenvalue {:e})", ev[0]),
            ));
        }
        let inverse = gram.inverse()?;
        let inverse = RMatrix::from_fn(n, n, |i, j| 0.5 * (inverse[(i, j)] + inverse[(j, i)]));
        let det = gram.det();
        Ok(Self { gram, inverse, det })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(RMatrix::identity(n)).expect("identity metric is valid")
    }

    /// Circle of circumference `length`.
    pub fn circle(length: f64) -> Result<Self> {
        Self::new(RMatrix::diagonal(&[length * length]))
    }

    pub fn n(&self) -> usize {
        self.gram.rows()
    }

    pub fn gram(&self) -> &RMatrix {
        &self.gram
    }

    pub fn inverse_gram(&self) -> &RMatrix {
        &self.inverse
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn volume(&self) -> f64 {
        self.det.sqrt()
    }

    /// `ξᵀG⁻¹ξ`, the squared length of the one-form `Σ ξ_j dx^j`.
    pub fn dual_norm_sq(&self, xi: &[f64]) -> f64 {
        self.inverse.quad_form(xi)
    }

    /// Gram matrix of `{dx^I : |I| = k}` (degree-then-mask order) under the
    /// Hodge inner product, including the volume factor `sqrt(det G)`.
    pub fn lambda_inner_product(&self, k: usize) -> Result<RMatrix> {
        let n = self.n();
        if k > n {
            return Err(Error::domain("lambda inner product", format!("degree {k} exceeds dimension {n}")));
        }
        let basis = ExteriorBasis::new(n);
        let range = basis.degree_range(k);
        let masks: Vec<Vec<usize>> = range.map(|i| mask_indices(basis.mask(i))).collect();
        let vol = self.volume();
        Ok(RMatrix::from_fn(masks.len(), masks.len(), |a, b| self.inverse.select(&masks[a], &masks[b]).det() * vol))
    }

    /// Quadratic form of the de Rham symbol: eigenvalues of the mode
    /// Laplacian are `ξᵀ B ξ` with `B = 4π² G⁻¹`.
    pub fn de_rham_symbol_form(&self) -> RMatrix {
        self.inverse.scale(4.0 * PI * PI)
    }
}

impl RMatrix {
    fn as_rows_iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows()).flat_map(move |r| (0..self.cols()).map(move |c| self[(r, c)]))
    }
}

/// Unitary character `ρ(m) = exp(2πi m·u)` of ℤⁿ, with `u ∈ [0,1)ⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Character {
    u: Vec<f64>,
}

/// Wraps a real number into [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

impl Character {
    pub fn new(u: &[f64]) -> Result<Self> {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("character", "non-finite parameter"));
        }
        Ok(Self { u: u.iter().map(|&x| wrap_unit(x)).collect() })
    }

    pub fn trivial(n: usize) -> Self {
        Self { u: vec![0.0; n] }
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.u.iter().all(|&x| x == 0.0)
    }

    /// Character product (sum of parameters, wrapped).
    pub fn shifted(&self, delta: &[f64]) -> Self {
        Self { u: self.u.iter().zip(delta).map(|(a, b)| wrap_unit(a + b)).collect() }
    }
}

/// Complex torus ℂ/(ℤ + τℤ) in the coordinate `z = x¹ + τ x²`, with a
/// Hermitian metric scaled by `area_scale` and a character `(u, v)`.
///
/// The real metric is `G = A [[1, Re τ], [Re τ, |τ|²]]`, so `|dz̄|² = 2/A`
/// and the volume is `A · Im τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTorus {
    modulus: C64,
    area_scale: f64,
    chr: (f64, f64),
}

impl ComplexTorus {
    pub fn new(modulus: C64, area_scale: f64, chr: (f64, f64)) -> Result<Self> {
        if !(modulus.im > 0.0) || !modulus.re.is_finite() || !modulus.im.is_finite() {
            return Err(Error::domain("complex torus", format!("Im τ must be positive, got τ = {modulus}")));
        }
        if !(area_scale > 0.0) || !area_scale.is_finite() {
            return Err(Error::domain("complex torus", "area scale must be positive"));
        }
        if !chr.0.is_finite() || !chr.1.is_finite() {
            return Err(Error::domain("complex torus", "non-finite character"));
        }
        Ok(Self { modulus, area_scale, chr: (wrap_unit(chr.0), wrap_unit(chr.1)) })
    }

    pub fn modulus(&self) -> C64 {
        self.modulus
    }

    pub fn area_scale(&self) -> f64 {
        self.area_scale
    }

    pub fn character_uv(&self) -> (f64, f64) {
        self.chr
    }

    pub fn with_character(&self, u: f64, v: f64) -> Self {
        Self { chr: (wrap_unit(u), wrap_unit(v)), ..self.clone() }
    }

    pub fn to_flat_torus(&self) -> FlatTorus {
        let t = self.modulus;
        let a = self.area_scale;
        FlatTorus::new(RMatrix::from_rows(&[vec![a, a * t.re], vec![a * t.re, a * t.norm_sqr()]]).unwrap())
            .expect("Im τ > 0 gives a positive definite metric")
    }

    /// The character on ℝ²/ℤ² seen by the Fourier modes. The holomorphic
    /// line bundle `(u, v)` twists the real period `x¹` by `v` and the
    /// τ-period `x²` by `u`; with this assignment the spectral determinant
    /// reproduces the θ₁/η closed form.
    pub fn internal_character(&self) -> Character {
        Character::new(&[self.chr.1, self.chr.0]).unwrap()
    }

    /// Coefficients of `dz̄` in the basis `(dx¹, dx²)`.
    pub fn dzbar(&self) -> [C64; 2] {
        [C64::new(1.0, 0.0), self.modulus.conj()]
    }

    /// Coefficients of `dz` in the basis `(dx¹, dx²)`.
    pub fn dz(&self) -> [C64; 2] {
        [C64::new(1.0, 0.0), self.modulus]
    }

    /// `∂̄` symbol: for the mode `e^{2πi ξ·x}`, `∂̄ = σ(ξ) dz̄` with
    /// `σ(ξ) = π (ξ₁ τ − ξ₂) / Im τ`. Returns the coefficients of ξ₁ and ξ₂.
    pub fn dbar_symbol(&self) -> [C64; 2] {
        let t = self.modulus;
        [t * (PI / t.im), C64::new(-PI / t.im, 0.0)]
    }

    /// Real character shift `δ` with `σ(δ) = h`, so that a flux `h dz̄`
    /// acts on every mode exactly as the character shift `u ↦ u + δ`.
    pub fn flux_shift(&self, h: C64) -> [f64; 2] {
        let t = self.modulus;
        let w = h * (t.im / PI);
        let d1 = w.im / t.im;
        let d2 = d1 * t.re - w.re;
        [d1, d2]
    }
}

/// Gram matrix (and optionally its derivative) of wedge products of complex
/// one-forms. Each basis element is a list of one-forms given by their
/// coefficients in `dx`; entry `(a, b)` is `sqrt(det G) · det[⟨α_i, β_j⟩]`
/// with `⟨α, β⟩ = ᾱᵀ G⁻¹ β`.
pub fn wedge_gram(g: &RMatrix, dg: Option<&RMatrix>, elements: &[Vec<Vec<C64>>]) -> Result<(CMatrix, Option<CMatrix>)> {
    let n = g.rows();
    let gi = g.inverse()?;
    let det = g.det();
    if !(det > 0.0) {
        return Err(Error::domain("wedge gram", "metric not positive definite"));
    }
    let vol = det.sqrt();
    let gic = CMatrix::from_real(&gi);
    let dgi = dg.map(|d| CMatrix::from_real(&gi.mul(d).mul(&gi).scale(-1.0)));
    let dvol = dg.map(|d| 0.5 * vol * gi.mul(d).trace());
    let pair = |m: &CMatrix, a: &[C64], b: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += a[i].conj() * m[(i, j)] * b[j];
            }
        }
        acc
    };
    let len = elements.len();
    let mut m = CMatrix::zeros(len, len);
    let mut dm = dgi.as_ref().map(|_| CMatrix::zeros(len, len));
    for a in 0..len {
        for b in 0..len {
            let ea = &elements[a];
            let eb = &elements[b];
            if ea.len() != eb.len() {
                continue;
            }
            let k = ea.len();
            let p = CMatrix::from_fn(k, k, |i, j| pair(&gic, &ea[i], &eb[j]));
            let dp = p.det();
            m[(a, b)] = dp * vol;
            if let (Some(dgi), Some(dm)) = (dgi.as_ref(), dm.as_mut()) {
                let pd = CMatrix::from_fn(k, k, |i, j| pair(dgi, &ea[i], &eb[j]));
                // d det P = Σ_c det(P with column c replaced by P′ column c).
                let mut ddet = C64::new(0.0, 0.0);
                for c in 0..k {
                    let mut q = p.clone();
                    for r in 0..k {
                        q[(r, c)] = pd[(r, c)];
                    }
                    ddet += q.det();
                }
                dm[(a, b)] = ddet * vol + dp * dvol.unwrap();
            }
        }
    }
    Ok((m, dm))
}

/// The real one-forms `dx^{i}` making up `dx^I`, as coefficient vectors.
pub fn coordinate_wedge_elements(n: usize) -> Vec<Vec<Vec<C64>>> {
    let basis = ExteriorBasis::new(n);
    basis
        .masks()
        .iter()
        .map(|&mask| {
            mask_indices(mask)
                .into_iter()
                .map(|j| (0..n).map(|i| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
                .collect()
        })
        .collect()
}

/// One-parameter families of metrics through a base metric.
#[derive(Clone, Debug, PartialEq)]
pub enum PathFamily {
    Constant,
    /// `G(s) = e^{2s} G₀`
    Conformal,
    /// `G(s) = D G₀ D` with `D = diag(e^{s w_j})`
    DiagonalStretch {
        weights: Vec<f64>,
    },
    /// `G(s) = Sᵀ G₀ S` with `S = I + s E_ij`
    Shear {
        i: usize,
        j: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricPath {
    base: FlatTorus,
    family: PathFamily,
}

impl MetricPath {
    pub fn new(base: FlatTorus, family: PathFamily) -> Result<Self> {
        let n = base.n();
        match &family {
            PathFamily::DiagonalStretch { weights } if weights.len() != n => {
                return Err(Error::domain("metric path", "stretch weights must match the dimension"));
            }
            PathFamily::Shear { i, j } if *i >= n || *j >= n || i == j => {
                return Err(Error::domain("metric path", "shear indices must be distinct and in range"));
            }
            _ => {}
        }
        Ok(Self { base, family })
    }

    pub fn base(&self) -> &FlatTorus {
        &self.base
    }

    pub fn family(&self) -> &PathFamily {
        &self.family
    }

    pub fn gram(&self, s: f64) -> RMatrix {
        let g0 = self.base.gram();
        let n = g0.rows();
        match &self.family {
            PathFamily::Constant => g0.clone(),
            PathFamily::Conformal => g0.scale((2.0 * s).exp()),
            PathFamily::DiagonalStretch { weights } => {
                RMatrix::from_fn(n, n, |a, b| (s * (weights[a] + weights[b])).exp() * g0[(a, b)])
            }
            PathFamily::Shear { i, j } => {
                let sm = self.shear_matrix(*i, *j, s);
                sm.transpose().mul(g0).mul(&sm)
            }
        }
    }

    pub fn derivative(&self, s: f64) -> RMatrix {
        let g0 = self.base.gram();
        let n = g0.rows();
        match &self.family {
            PathFamily::Constant => RMatrix::zeros(n, n),
            PathFamily::Conformal => g0.scale(2.0 * (2.0 * s).exp()),
            PathFamily::DiagonalStretch { weights } => RMatrix::from_fn(n, n, |a, b| {
                (weights[a] + weights[b]) * (s * (weights[a] + weights[b])).exp() * g0[(a, b)]
            }),
            PathFamily::Shear { i, j } => {
                let sm = self.shear_matrix(*i, *j, s);
                let mut e = RMatrix::zeros(n, n);
                e[(*i, *j)] = 1.0;
                e.transpose().mul(g0).mul(&sm).add(&sm.transpose().mul(g0).mul(&e))
            }
        }
    }

    pub fn torus(&self, s: f64) -> Result<FlatTorus> {
        FlatTorus::new(self.gram(s)).map_err(|e| match e {
            Error::Domain { detail, .. } => Error::domain("metric path", format!("at s = {s}: {detail}")),
            other => other,
        })
    }

    fn shear_matrix(&self, i: usize, j: usize, s: f64) -> RMatrix {
        let mut sm = RMatrix::identity(self.base.n());
        sm[(i, j)] += s;
        sm
    }
}

/// `α = Γ⁻¹ dΓ/ds` on `⊕ₖ Λᵏ`, block-diagonal by degree.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaOperator {
    pub blocks: Vec<RMatrix>,
}

impl AlphaOperator {
    /// Assembled matrix in the exterior basis order.
    pub fn to_matrix(&self) -> RMatrix {
        let total: usize = self.blocks.iter().map(|b| b.rows()).sum();
        let mut m = RMatrix::zeros(total, total);
        let mut off = 0;
        for b in &self.blocks {
            for r in 0..b.rows() {
                for c in 0..b.cols() {
                    m[(off + r, off + c)] = b[(r, c)];
                }
            }
            off += b.rows();
        }
        m
    }
}

/// Derivative of `lambda_inner_product(k)` along the path.
pub fn lambda_inner_product_derivative(path: &MetricPath, s: f64, k: usize) -> Result<RMatrix> {
    let n = path.base().n();
    let g = path.gram(s);
    let dg = path.derivative(s);
    let basis = ExteriorBasis::new(n);
    let elements = coordinate_wedge_elements(n);
    let range = basis.degree_range(k);
    let sub: Vec<Vec<Vec<C64>>> = range.map(|i| elements[i].clone()).collect();
    let (_, dm) = wedge_gram(&g, Some(&dg), &sub)?;
    let dm = dm.unwrap();
    Ok(RMatrix::from_fn(dm.rows(), dm.cols(), |r, c| dm[(r, c)].re))
}

pub fn alpha_operator(path: &MetricPath, s: f64) -> Result<AlphaOperator> {
    let torus = path.torus(s)?;
    let n = torus.n();
    let mut blocks = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let m = torus.lambda_inner_product(k)?;
        let dm = lambda_inner_product_derivative(path, s, k)?;
        blocks.push(m.inverse()?.mul(&dm));
    }
    Ok(AlphaOperator { blocks })
}

/// Integer mode vector, stored inline.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode {
    coords: [i32; MAX_DIM],
    n: u8,
}

impl core::fmt::Debug for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Mode {
    pub fn new(m: &[i32]) -> Self {
        assert!(m.len() <= MAX_DIM);
        let mut coords = [0; MAX_DIM];
        coords[..m.len()].copy_from_slice(m);
        Self { coords, n: m.len() as u8 }
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.coords[..self.n as usize]
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    /// `ξ = m + u`
    pub fn xi(&self, u: &[f64]) -> Vec<f64> {
        self.as_slice().iter().zip(u).map(|(&m, &u)| m as f64 + u).collect()
    }
}

/// Default ceiling on the number of modes a single enumeration may produce.
pub const DEFAULT_MODE_LIMIT: usize = 6_000_000;

/// All `m ∈ ℤⁿ` with `(m+u)ᵀ Q (m+u) ≤ cutoff`, in lexicographic order.
/// Completeness follows from the bounding box `|x_j| ≤ sqrt(cutoff (Q⁻¹)_jj)`.
pub fn enumerate_quadratic(q: &RMatrix, u: &[f64], cutoff: f64, limit: usize) -> Result<Vec<Mode>> {
    let n = q.rows();
    if !(cutoff > 0.0) {
        return Err(Error::domain("mode enumeration", "cutoff must be positive"));
    }
    let qi = q.inverse()?;
    let mut lo = vec![0i64; n];
    let mut hi = vec![0i64; n];
    let mut box_size = 1f64;
    for j in 0..n {
        let r = (cutoff * qi[(j, j)]).max(0.0).sqrt() * (1.0 + 1e-12);
        lo[j] = (-r - u[j]).ceil() as i64;
        hi[j] = (r - u[j]).floor() as i64;
        if hi[j] < lo[j] {
            return Ok(Vec::new());
        }
        box_size *= (hi[j] - lo[j] + 1) as f64;
    }
    let ball =
        PI.powf(n as f64 / 2.0) / libm::tgamma(n as f64 / 2.0 + 1.0) * cutoff.powf(n as f64 / 2.0) / q.det().sqrt();
    if ball > limit as f64 || box_size > 64.0 * limit as f64 + 1e6 {
        return Err(Error::resource(
            "mode enumeration",
            format!("about {ball:.0} modes requested (box {box_size:.0}), limit {limit}"),
        ));
    }
    let mut out = Vec::new();
    let mut cur: Vec<i64> = lo.clone();
    let mut x = vec![0.0; n];
    loop {
        for j in 0..n {
            x[j] = cur[j] as f64 + u[j];
        }
        if q.quad_form(&x) <= cutoff {
            if out.len() >= limit {
                return Err(Error::resource("mode enumeration", format!("more than {limit} modes")));
            }
            let m: Vec<i32> = cur.iter().map(|&c| c as i32).collect();
            out.push(Mode::new(&m));
        }
        // Odometer, last coordinate fastest: lexicographic order.
        let mut j = n;
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            if cur[j] < hi[j] {
                cur[j] += 1;
                for k in j + 1..n {
                    cur[k] = lo[k];
                }
                break;
            }
        }
    }
}

/// Modes with `dual_norm_sq(m + u) ≤ cutoff`.
pub fn enumerate_modes(torus: &FlatTorus, chr: &Character, cutoff: f64, limit: usize) -> Result<Vec<Mode>> {
    if chr.n() != torus.n() {
        return Err(Error::Shape { context: "character dimension differs from torus dimension" });
    }
    enumerate_quadratic(torus.inverse_gram(), chr.u(), cutoff, limit)
}

/// `min_{k ∈ ℤⁿ∖0} kᵀ Q k` for a positive definite `Q`, by bounded enumeration.
pub fn shortest_vector_sq(q: &RMatrix) -> Result<f64> {
    let n = q.rows();
    let mut best = (0..n).map(|j| q[(j, j)]).fold(f64::INFINITY, f64::min);
    let zeros = vec![0.0; n];
    let modes = enumerate_quadratic(q, &zeros, best * (1.0 + 1e-9), 1_000_000)?;
    for m in modes {
        if m.as_slice().iter().all(|&c| c == 0) {
            continue;
        }
        let x: Vec<f64> = m.as_slice().iter().map(|&c| c as f64).collect();
        best = best.min(q.quad_form(&x));
    }
    Ok(best)
}

/// Number of basis forms of degree k.
pub fn lambda_dim(n: usize, k: usize) -> usize {
    binomial(n, k)
}
