//! ℤ₂-graded complexes on flat tori, reduced to finite matrices per Fourier
//! mode.
//!
//! Every realized operator has constant coefficients, so on the mode
//! `e^{2πi (m+u)·x}` it acts as a fixed matrix `D(ξ) = Σ ξ_j K_j + A`.
//! The matrices are conjugated by the square root of the metric Gram matrix
//! once per spec, after which each mode problem is a plain Euclidean
//! singular-value problem.
//!
//! Sign conventions: a form term `ω ⊗ X` with `X` odd on the auxiliary
//! graded space acts as `ε(ω) P ⊗ X`, where `P = (−1)^deg` on forms. The
//! Dolbeault operator on `Ω^{p,•}` is `(−1)^p (∂̄ + h ε(dz̄))` acting on the
//! factor after `dz^p`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::exterior::{binomial, ExteriorBasis, MAX_DIM};
use crate::geometry::{
    coordinate_wedge_elements, enumerate_quadratic, wedge_gram, Character, ComplexTorus, FlatTorus, Mode,
};
use crate::linalg::{hermitian_function, CMatrix, RMatrix, C64, I};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(k: usize) -> Self {
        if k % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Scalar(C64),
    Matrix(CMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormTerm {
    /// Index set I as a bitmask over the coordinates.
    pub mask: u32,
    pub coeff: Coefficient,
}

/// A constant differential form, scalar or endomorphism valued.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantForm {
    n: usize,
    /// `(r₀, r₁)` of the auxiliary graded space for matrix-valued forms.
    rank: Option<(usize, usize)>,
    parity: Parity,
    terms: Vec<FormTerm>,
}

impl ConstantForm {
    pub fn zero(n: usize, parity: Parity) -> Self {
        Self { n, rank: None, parity, terms: Vec::new() }
    }

    /// Scalar form; every term's degree must have the declared parity.
    pub fn scalar(n: usize, parity: Parity, terms: &[(u32, C64)]) -> Result<Self> {
        let terms = terms.iter().map(|&(mask, c)| FormTerm { mask, coeff: Coefficient::Scalar(c) }).collect();
        let f = Self { n, rank: None, parity, terms };
        f.validate()?;
        Ok(f)
    }

    /// `θ · dx¹∧…∧dxⁿ`
    pub fn volume(n: usize, theta: f64) -> Self {
        Self::scalar(n, Parity::of(n), &[((1u32 << n) - 1, C64::new(theta, 0.0))]).unwrap()
    }

    /// Endomorphism-valued form on `F = C^{r₀|r₁}`. Parity refers to the
    /// total grading: form degree plus the degree of the endomorphism.
    pub fn endomorphism(n: usize, rank: (usize, usize), parity: Parity, terms: Vec<(u32, CMatrix)>) -> Result<Self> {
        let terms = terms.into_iter().map(|(mask, m)| FormTerm { mask, coeff: Coefficient::Matrix(m) }).collect();
        let f = Self { n, rank: Some(rank), parity, terms };
        f.validate()?;
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> Option<(usize, usize)> {
        self.rank
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn terms(&self) -> &[FormTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| match &t.coeff {
            Coefficient::Scalar(c) => *c == C64::new(0.0, 0.0),
            Coefficient::Matrix(m) => m.max_abs() == 0.0,
        })
    }

    /// Scales every coefficient.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff = match &t.coeff {
                Coefficient::Scalar(c) => Coefficient::Scalar(c * s),
                Coefficient::Matrix(m) => Coefficient::Matrix(m.scale(C64::new(s, 0.0))),
            };
        }
        out
    }

    /// Scales the terms of positive form degree, leaving the degree-0 part
    /// (the bundle endomorphism of a superconnection) alone.
    pub fn flux_scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|t| t.mask != 0);
        let mut out = out.scaled(s);
        out.terms.extend(self.terms.iter().filter(|t| t.mask == 0).cloned());
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n > MAX_DIM {
            return Err(Error::domain("constant form", format!("dimension {} exceeds {MAX_DIM}", self.n)));
        }
        for t in &self.terms {
            if t.mask >> self.n != 0 {
                return Err(Error::domain(
                    "constant form",
                    format!("index set {:#b} outside dimension {}", t.mask, self.n),
                ));
            }
            let deg = t.mask.count_ones() as usize;
            match (&t.coeff, self.rank) {
                (Coefficient::Scalar(c), None) => {
                    if !c.re.is_finite() || !c.im.is_finite() {
                        return Err(Error::domain("constant form", "non-finite coefficient"));
                    }
                    if *c != C64::new(0.0, 0.0) && Parity::of(deg) != self.parity {
                        return Err(Error::domain(
                            "constant form",
                            format!("term of degree {deg} has the wrong parity"),
                        ));
                    }
                }
                (Coefficient::Matrix(m), Some((r0, r1))) => {
                    let r = r0 + r1;
                    if m.rows() != r || m.cols() != r {
                        return Err(Error::domain("constant form", format!("coefficient must be {r}×{r}")));
                    }
                    if m.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(Error::domain("constant form", "non-finite coefficient"));
                    }
                    let (even, odd) = split_by_grading(m, r0);
                    if even.max_abs() > 0.0 && Parity::of(deg) != self.parity {
                        return Err(Error::domain(
                            "constant form",
                            format!("even endomorphism on a degree-{deg} form has the wrong total parity"),
                        ));
                    }
                    if odd.max_abs() > 0.0 && Parity::of(deg + 1) != self.parity {
                        return Err(Error::domain(
                            "constant form",
                            format!("odd endomorphism on a degree-{deg} form has the wrong total parity"),
                        ));
                    }
                }
                _ => return Err(Error::domain("constant form", "mixed scalar and matrix coefficients")),
            }
        }
        Ok(())
    }
}

/// Block-diagonal and off-diagonal parts of an endomorphism of `C^{r₀|r₁}`.
pub fn split_by_grading(m: &CMatrix, r0: usize) -> (CMatrix, CMatrix) {
    let r = m.rows();
    let even = CMatrix::from_fn(r, r, |i, j| if (i < r0) == (j < r0) { m[(i, j)] } else { C64::new(0.0, 0.0) });
    let odd = m.sub(&even);
    (even, odd)
}

/// Left multiplication by a constant form on `Λ ⊗ F`, with basis index
/// `form_index · r + f`.
pub fn wedge_matrix(form: &ConstantForm) -> CMatrix {
    let basis = ExteriorBasis::new(form.n);
    let (r0, r1) = form.rank.unwrap_or((1, 0));
    let r = r0 + r1;
    let dim = basis.len() * r;
    let mut out = CMatrix::zeros(dim, dim);
    let parity = basis.parity();
    for t in &form.terms {
        let e = basis.wedge(t.mask);
        match &t.coeff {
            Coefficient::Scalar(c) => {
                out = out.add(&e.kron(&CMatrix::identity(r)).scale(*c));
            }
            Coefficient::Matrix(m) => {
                let (even, odd) = split_by_grading(m, r0);
                out = out.add(&e.kron(&even)).add(&e.mul(&parity).kron(&odd));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperconnectionData {
    pub rank: (usize, usize),
    pub a: ConstantForm,
}

impl SuperconnectionData {
    pub fn new(rank: (usize, usize), a: ConstantForm) -> Result<Self> {
        if rank.0 + rank.1 == 0 {
            return Err(Error::domain("superconnection", "auxiliary bundle has rank zero"));
        }
        match a.rank {
            Some(r) if r == rank => {}
            None if a.terms.is_empty() => {}
            _ => return Err(Error::domain("superconnection", "form coefficients do not match the bundle rank")),
        }
        if a.parity != Parity::Odd {
            return Err(Error::domain("superconnection", "A must be odd in the total grading"));
        }
        Ok(Self { rank, a: ConstantForm { rank: Some(rank), ..a } })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ComplexKind {
    /// `d + H∧` with a scalar odd flux.
    TwistedDeRham { flux: ConstantForm },
    /// `∂̄ + H∧` on `Ω^{p,•}` of a complex torus; `flux` lives on the single
    /// antiholomorphic direction, so it is `h dz̄` or zero.
    TwistedDolbeault { p: usize, flux: ConstantForm },
    /// `∇ + A` on `Λ ⊗ C^{r₀|r₁}`.
    Superconnection(SuperconnectionData),
    /// Block direct sum; each summand keeps its own kind and character.
    DirectSum(Vec<ComplexSpec>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Flat(FlatTorus),
    /// Complex torus with the real metric actually used for adjoints.
    /// Defaults to the Hermitian metric of the torus; metric paths replace
    /// it while keeping the complex structure.
    Complex {
        torus: ComplexTorus,
        metric: FlatTorus,
    },
}

impl Geometry {
    pub fn flat(&self) -> &FlatTorus {
        match self {
            Geometry::Flat(t) => t,
            Geometry::Complex { metric, .. } => metric,
        }
    }

    pub fn complex(torus: ComplexTorus) -> Self {
        let metric = torus.to_flat_torus();
        Geometry::Complex { torus, metric }
    }
}

/// Gauge conjugation `D ↦ e^{−sB} D e^{sB}` by the multiplication operator
/// of an even constant form `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conjugation {
    pub beta: ConstantForm,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpec {
    pub kind: ComplexKind,
    pub geometry: Geometry,
    pub character: Character,
    /// Exchange the roles of the even and odd components.
    pub swapped: bool,
    pub conjugation: Option<Conjugation>,
}

impl ComplexSpec {
    pub fn de_rham(torus: FlatTorus, flux: ConstantForm, character: Character) -> Result<Self> {
        let s = Self {
            kind: ComplexKind::TwistedDeRham { flux },
            geometry: Geometry::Flat(torus),
            character,
            swapped: false,
            conjugation: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Untwisted de Rham complex with a character.
    pub fn flat_de_rham(torus: FlatTorus, u: &[f64]) -> Result<Self> {
        let n = torus.n();
        Self::de_rham(torus, ConstantForm::zero(n, Parity::Odd), Character::new(u)?)
    }

    /// Twisted Dolbeault complex; the character is taken from the torus.
    pub fn dolbeault(torus: ComplexTorus, p: usize, flux: ConstantForm) -> Result<Self> {
        let character = torus.internal_character();
        let s = Self {
            kind: ComplexKind::TwistedDolbeault { p, flux },
            geometry: Geometry::complex(torus),
            character,
            swapped: false,
            conjugation: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn superconnection(torus: FlatTorus, data: SuperconnectionData, character: Character) -> Result<Self> {
        let s = Self {
            kind: ComplexKind::Superconnection(data),
            geometry: Geometry::Flat(torus),
            character,
            swapped: false,
            conjugation: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn direct_sum(parts: Vec<ComplexSpec>) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::domain("direct sum", "no summands"))?;
        let geometry = first.geometry.clone();
        let n = geometry.flat().n();
        let s = Self {
            kind: ComplexKind::DirectSum(parts),
            geometry,
            character: Character::trivial(n),
            swapped: false,
            conjugation: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.geometry.flat().n()
    }

    pub fn torus(&self) -> &FlatTorus {
        self.geometry.flat()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.character.n() != n {
            return Err(Error::domain("complex spec", "character dimension differs from torus dimension"));
        }
        match &self.kind {
            ComplexKind::TwistedDeRham { flux } => {
                if flux.n != n || flux.rank.is_some() {
                    return Err(Error::domain("de Rham flux", "flux must be a scalar form on the torus"));
                }
                if flux.parity != Parity::Odd {
                    return Err(Error::domain("de Rham flux", "flux must be odd"));
                }
            }
            ComplexKind::TwistedDolbeault { p, flux } => {
                if !matches!(self.geometry, Geometry::Complex { .. }) {
                    return Err(Error::domain("Dolbeault complex", "needs a complex torus"));
                }
                if *p > 1 {
                    return Err(Error::domain("Dolbeault complex", "holomorphic degree must be 0 or 1"));
                }
                if flux.n != 1 || flux.rank.is_some() || flux.parity != Parity::Odd {
                    return Err(Error::domain("Dolbeault flux", "flux must be a scalar (0,1)-form h dz̄"));
                }
            }
            ComplexKind::Superconnection(data) => {
                if data.a.n != n {
                    return Err(Error::domain("superconnection", "form dimension differs from torus dimension"));
                }
            }
            ComplexKind::DirectSum(parts) => {
                for p in parts {
                    if p.geometry != self.geometry {
                        return Err(Error::domain("direct sum", "summands must share the geometry"));
                    }
                }
            }
        }
        if let Some(c) = &self.conjugation {
            if c.beta.parity != Parity::Even {
                return Err(Error::domain("gauge conjugation", "β must be even"));
            }
            if !c.s.is_finite() {
                return Err(Error::domain("gauge conjugation", "non-finite parameter"));
            }
        }
        Ok(())
    }

    /// Same complex with a different real metric.
    pub fn with_metric(&self, gram: &RMatrix) -> Result<Self> {
        let metric = FlatTorus::new(gram.clone())?;
        let mut out = self.clone();
        out.geometry = match &self.geometry {
            Geometry::Flat(_) => Geometry::Flat(metric),
            Geometry::Complex { torus, .. } => Geometry::Complex { torus: torus.clone(), metric },
        };
        if let ComplexKind::DirectSum(parts) = &self.kind {
            out.kind = ComplexKind::DirectSum(parts.iter().map(|p| p.with_metric(gram)).collect::<Result<_>>()?);
        }
        Ok(out)
    }

    pub fn with_character(&self, character: Character) -> Result<Self> {
        let mut out = self.clone();
        out.character = character;
        out.validate()?;
        Ok(out)
    }

    /// Same complex with its flux multiplied by `eps`. The mode builder
    /// rechecks flatness, which scaling can break for superconnections.
    pub fn with_flux_scaled(&self, eps: f64) -> Result<Self> {
        let mut out = self.clone();
        out.kind = match &self.kind {
            ComplexKind::TwistedDeRham { flux } => ComplexKind::TwistedDeRham { flux: flux.flux_scaled(eps) },
            ComplexKind::TwistedDolbeault { p, flux } => {
                ComplexKind::TwistedDolbeault { p: *p, flux: flux.flux_scaled(eps) }
            }
            ComplexKind::Superconnection(d) => {
                ComplexKind::Superconnection(SuperconnectionData::new(d.rank, d.a.flux_scaled(eps))?)
            }
            ComplexKind::DirectSum(parts) => {
                ComplexKind::DirectSum(parts.iter().map(|p| p.with_flux_scaled(eps)).collect::<Result<_>>()?)
            }
        };
        out.validate()?;
        Ok(out)
    }

    pub fn grade_swapped(&self) -> Self {
        let mut out = self.clone();
        out.swapped = !out.swapped;
        out
    }

    pub fn conjugated(&self, beta: ConstantForm, s: f64) -> Result<Self> {
        let mut out = self.clone();
        out.conjugation = Some(Conjugation { beta, s });
        out.validate()?;
        Ok(out)
    }
}

/// Result of a flatness check: pass iff the residual vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct Flatness {
    pub pass: bool,
    pub residual: f64,
}

/// `A ∧ A = 0` (as matrices on `Λ ⊗ F`) for superconnections; scalar fluxes
/// and the one-dimensional Dolbeault flux are flat automatically.
pub fn check_flatness(spec: &ComplexSpec) -> Flatness {
    let residual = match &spec.kind {
        ComplexKind::TwistedDeRham { flux } => {
            let w = wedge_matrix(flux);
            w.mul(&w).max_abs()
        }
        ComplexKind::TwistedDolbeault { flux, .. } => {
            let w = wedge_matrix(flux);
            w.mul(&w).max_abs()
        }
        ComplexKind::Superconnection(data) => {
            let w = wedge_matrix(&data.a);
            w.mul(&w).max_abs()
        }
        ComplexKind::DirectSum(parts) => parts.iter().map(|p| check_flatness(p).residual).fold(0.0, f64::max),
    };
    let scale = 1.0;
    Flatness { pass: residual <= 1e-13 * scale, residual }
}

/// The finite-dimensional data of one (non-direct-sum) complex, already in
/// orthonormal coordinates.
#[derive(Clone, Debug)]
pub struct ModeBlock {
    /// Effective character (flux shifts are not folded in here).
    pub u: Vec<f64>,
    /// `D₀(ξ) = Σ ξ_j k0[j] + a0`, even → odd.
    pub k0: Vec<CMatrix>,
    pub a0: CMatrix,
    /// `D₁(ξ) = Σ ξ_j k1[j] + a1`, odd → even.
    pub k1: Vec<CMatrix>,
    pub a1: CMatrix,
    /// Symbol quadratic form: every nonzero singular value of the symbol
    /// part at ξ equals `sqrt(ξᵀBξ)`.
    pub symbol_form: RMatrix,
    /// `‖A‖` in orthonormal coordinates.
    pub a_norm: f64,
    pub even: Vec<usize>,
    pub odd: Vec<usize>,
    /// Orthonormalizer `S = M^{1/2}` and its inverse (full space).
    pub s_inv: CMatrix,
    /// Description of the basis for recomputing Gram derivatives.
    pub basis: BlockBasis,
    /// Exact spectral profile when the block's spectrum is a shifted
    /// quadratic form.
    pub exact: Option<ExactProfile>,
}

#[derive(Clone, Debug)]
pub struct BlockBasis {
    /// Each basis form as a wedge of complex one-forms (coefficients in dx).
    pub elements: Vec<Vec<Vec<C64>>>,
    /// Rank of the auxiliary space tensored on the right.
    pub r: usize,
}

/// Spectrum `{ξᵀBξ : ξ ∈ ℤⁿ + u} ∖ {0}` with per-grade multiplicities.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactProfile {
    pub symbol_form: RMatrix,
    pub u: Vec<f64>,
    pub rank0: usize,
    pub rank1: usize,
}

impl ModeBlock {
    pub fn dim_even(&self) -> usize {
        self.even.len()
    }

    pub fn dim_odd(&self) -> usize {
        self.odd.len()
    }

    pub fn d0(&self, xi: &[f64]) -> CMatrix {
        let mut d = self.a0.clone();
        for (x, k) in xi.iter().zip(&self.k0) {
            d.axpy(C64::new(*x, 0.0), k);
        }
        d
    }

    pub fn d1(&self, xi: &[f64]) -> CMatrix {
        let mut d = self.a1.clone();
        for (x, k) in xi.iter().zip(&self.k1) {
            d.axpy(C64::new(*x, 0.0), k);
        }
        d
    }

    /// Kernel certificate radius: for `sqrt(ξᵀBξ) > a_norm` the mode
    /// Laplacian is strictly positive.
    pub fn kernel_radius(&self) -> f64 {
        self.a_norm
    }
}

/// All mode blocks of a spec.
#[derive(Clone, Debug)]
pub struct ModeBuilder {
    pub blocks: Vec<ModeBlock>,
    n: usize,
}

/// D(m) for one mode, block-diagonal over the summands of a direct sum.
#[derive(Clone, Debug)]
pub struct ModeOperator {
    pub m: Mode,
    pub blocks: Vec<ModeOperatorBlock>,
}

#[derive(Clone, Debug)]
pub struct ModeOperatorBlock {
    pub xi: Vec<f64>,
    /// `ξᵀBξ`, the symbol eigenvalue scale.
    pub q: f64,
    pub d0: CMatrix,
    pub d1: CMatrix,
}

impl ModeOperator {
    pub fn d0(&self) -> CMatrix {
        block_diag(self.blocks.iter().map(|b| &b.d0))
    }

    pub fn d1(&self) -> CMatrix {
        block_diag(self.blocks.iter().map(|b| &b.d1))
    }

    pub fn dims(&self) -> (usize, usize) {
        let d0 = self.d0();
        (d0.cols(), d0.rows())
    }
}

pub fn block_diag<'a>(parts: impl Iterator<Item = &'a CMatrix> + Clone) -> CMatrix {
    let rows: usize = parts.clone().map(|p| p.rows()).sum();
    let cols: usize = parts.clone().map(|p| p.cols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for p in parts {
        for r in 0..p.rows() {
            for c in 0..p.cols() {
                out[(r0 + r, c0 + c)] = p[(r, c)];
            }
        }
        r0 += p.rows();
        c0 += p.cols();
    }
    out
}

struct RawBlock {
    k: Vec<CMatrix>,
    a: CMatrix,
    parity: Vec<usize>,
    basis: BlockBasis,
    exact: Option<(Vec<f64>, usize, usize)>,
}

fn de_rham_ranks(n: usize, r0: usize, r1: usize) -> (usize, usize) {
    let even: usize = (0..n).filter(|k| k % 2 == 0).map(|k| binomial(n - 1, k)).sum();
    let odd: usize = (0..n).filter(|k| k % 2 == 1).map(|k| binomial(n - 1, k)).sum();
    (r0 * even + r1 * odd, r0 * odd + r1 * even)
}

fn raw_block(spec: &ComplexSpec) -> Result<RawBlock> {
    let n = spec.n();
    match &spec.kind {
        ComplexKind::TwistedDeRham { flux } => raw_exterior(n, (1, 0), wedge_matrix(flux), exact_shift_de_rham(flux)),
        ComplexKind::Superconnection(data) => {
            let exact = if data.a.is_zero() { Some(vec![0.0; n]) } else { None };
            raw_exterior(n, data.rank, wedge_matrix(&data.a), exact)
        }
        ComplexKind::TwistedDolbeault { p, flux } => {
            let Geometry::Complex { torus, .. } = &spec.geometry else { unreachable!() };
            let sign = if *p == 0 { 1.0 } else { -1.0 };
            let eps = ExteriorBasis::new(1).wedge(1);
            let sym = torus.dbar_symbol();
            let k: Vec<CMatrix> = sym.iter().map(|c| eps.scale(c * sign)).collect();
            let a = wedge_matrix(flux).scale(C64::new(sign, 0.0));
            let dzb = torus.dzbar().to_vec();
            let dz = torus.dz().to_vec();
            let elements = if *p == 0 { vec![vec![], vec![dzb]] } else { vec![vec![dz.clone()], vec![dz, dzb]] };
            let h = flux
                .terms
                .iter()
                .map(|t| match t.coeff {
                    Coefficient::Scalar(c) => c,
                    Coefficient::Matrix(_) => unreachable!(),
                })
                .fold(C64::new(0.0, 0.0), |a, b| a + b);
            let shift = torus.flux_shift(h);
            Ok(RawBlock {
                k,
                a,
                parity: vec![0, 1],
                basis: BlockBasis { elements, r: 1 },
                exact: Some((shift.to_vec(), 1, 0)),
            })
        }
        ComplexKind::DirectSum(_) => unreachable!("direct sums are flattened before building blocks"),
    }
}

/// A de Rham flux made only of imaginary one-form coefficients is a
/// character shift: `2πi ξ_j + i η_j = 2πi (ξ_j + η_j / 2π)`.
fn exact_shift_de_rham(flux: &ConstantForm) -> Option<Vec<f64>> {
    let mut shift = vec![0.0; flux.n];
    for t in &flux.terms {
        let Coefficient::Scalar(c) = t.coeff else { return None };
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        if t.mask.count_ones() != 1 || c.re != 0.0 {
            return None;
        }
        shift[t.mask.trailing_zeros() as usize] += c.im / (2.0 * PI);
    }
    Some(shift)
}

fn raw_exterior(n: usize, rank: (usize, usize), a: CMatrix, exact_shift: Option<Vec<f64>>) -> Result<RawBlock> {
    let basis = ExteriorBasis::new(n);
    let (r0, r1) = rank;
    let r = r0 + r1;
    let two_pi_i = I * (2.0 * PI);
    let k = (0..n).map(|j| basis.wedge(1 << j).kron(&CMatrix::identity(r)).scale(two_pi_i)).collect();
    let mut parity = Vec::with_capacity(basis.len() * r);
    for i in 0..basis.len() {
        for f in 0..r {
            parity.push((basis.degree(i) + usize::from(f >= r0)) % 2);
        }
    }
    Ok(RawBlock {
        k,
        a,
        parity,
        basis: BlockBasis { elements: coordinate_wedge_elements(n), r },
        exact: exact_shift.map(|s| {
            let (e, o) = de_rham_ranks(n, r0, r1);
            (s, e, o)
        }),
    })
}

/// Full Gram matrix of a block basis (forms ⊗ identity on F) and optionally
/// its derivative along `dg`.
pub fn block_gram(basis: &BlockBasis, g: &RMatrix, dg: Option<&RMatrix>) -> Result<(CMatrix, Option<CMatrix>)> {
    let (m, dm) = wedge_gram(g, dg, &basis.elements)?;
    let id = CMatrix::identity(basis.r);
    Ok((m.kron(&id), dm.map(|d| d.kron(&id))))
}

fn flatten(spec: &ComplexSpec, out: &mut Vec<ComplexSpec>) {
    match &spec.kind {
        ComplexKind::DirectSum(parts) => {
            for p in parts {
                let mut p = p.clone();
                p.swapped ^= spec.swapped;
                if p.conjugation.is_none() {
                    p.conjugation = spec.conjugation.clone();
                }
                flatten(&p, out);
            }
        }
        _ => out.push(spec.clone()),
    }
}

impl ModeBuilder {
    pub fn new(spec: &ComplexSpec) -> Result<Self> {
        let flat = check_flatness(spec);
        if !flat.pass {
            return Err(Error::domain("mode operator", format!("complex is not flat: ‖A∧A‖ = {:e}", flat.residual)));
        }
        let mut parts = Vec::new();
        flatten(spec, &mut parts);
        let blocks = parts.iter().map(build_block).collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks, n: spec.n() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn operator(&self, m: Mode) -> ModeOperator {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let xi = m.xi(&b.u);
                ModeOperatorBlock { q: b.symbol_form.quad_form(&xi), d0: b.d0(&xi), d1: b.d1(&xi), xi }
            })
            .collect();
        ModeOperator { m, blocks }
    }

    /// Union over blocks of the modes with `ξᵀBξ ≤ cutoff`, sorted.
    pub fn enumerate(&self, cutoff: f64, limit: usize) -> Result<Vec<Mode>> {
        let mut all: Vec<Mode> = Vec::new();
        for b in &self.blocks {
            let mut modes = enumerate_quadratic(&b.symbol_form, &b.u, cutoff, limit)?;
            all.append(&mut modes);
        }
        all.sort_unstable();
        all.dedup();
        if all.len() > limit {
            return Err(Error::resource("mode enumeration", format!("more than {limit} modes")));
        }
        Ok(all)
    }

    /// Largest kernel certificate radius over the blocks.
    pub fn kernel_radius(&self) -> f64 {
        self.blocks.iter().map(|b| b.kernel_radius()).fold(0.0, f64::max)
    }

    /// Modes that may carry harmonic forms: `sqrt(ξᵀBξ) ≤ radius` in some block.
    pub fn kernel_candidates(&self, limit: usize) -> Result<Vec<Mode>> {
        let mut all = Vec::new();
        for b in &self.blocks {
            let r = b.kernel_radius() * (1.0 + 1e-9) + 1e-9;
            let mut modes = enumerate_quadratic(&b.symbol_form, &b.u, r * r, limit)?;
            all.append(&mut modes);
        }
        all.sort_unstable();
        all.dedup();
        Ok(all)
    }

    /// Exact profiles of all blocks, when every block has one.
    pub fn exact_profiles(&self) -> Option<Vec<ExactProfile>> {
        self.blocks.iter().map(|b| b.exact.clone()).collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.blocks.iter().fold((0, 0), |(e, o), b| (e + b.dim_even(), o + b.dim_odd()))
    }
}

fn build_block(spec: &ComplexSpec) -> Result<ModeBlock> {
    let raw = raw_block(spec)?;
    let g = spec.torus().gram().clone();
    let (m, _) = block_gram(&raw.basis, &g, None)?;
    let s = hermitian_function(&m, |x| x.sqrt())?;
    let s_inv = hermitian_function(&m, |x| 1.0 / x.sqrt())?;
    let (mut k, mut a) = (raw.k, raw.a);
    if let Some(c) = &spec.conjugation {
        let w = wedge_matrix(&c.beta);
        if w.rows() != a.rows() {
            return Err(Error::domain("gauge conjugation", "β acts on a different space than D"));
        }
        let fwd = w.scale(C64::new(c.s, 0.0)).expm();
        let back = w.scale(C64::new(-c.s, 0.0)).expm();
        k = k.iter().map(|kj| back.mul(kj).mul(&fwd)).collect();
        a = back.mul(&a).mul(&fwd);
    }
    let kt: Vec<CMatrix> = k.iter().map(|kj| s.mul(kj).mul(&s_inv)).collect();
    let at = s.mul(&a).mul(&s_inv);
    let (mut even, mut odd): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
    for (i, &p) in raw.parity.iter().enumerate() {
        if p == 0 {
            even.push(i)
        } else {
            odd.push(i)
        }
    }
    if spec.swapped {
        core::mem::swap(&mut even, &mut odd);
    }
    let half = even.len().max(1) as f64;
    let n = spec.n();
    let symbol_form = RMatrix::from_fn(n, n, |i, j| kt[i].adjoint().mul(&kt[j]).trace().re / half);
    let symbol_form = RMatrix::from_fn(n, n, |i, j| 0.5 * (symbol_form[(i, j)] + symbol_form[(j, i)]));
    let a_norm = at.op_norm();
    let k0 = kt.iter().map(|kj| kj.select(&odd, &even)).collect();
    let k1 = kt.iter().map(|kj| kj.select(&even, &odd)).collect();
    let a0 = at.select(&odd, &even);
    let a1 = at.select(&even, &odd);
    let u = spec.character.u().to_vec();
    let exact = raw.exact.map(|(shift, r0, r1)| {
        let (r0, r1) = if spec.swapped { (r1, r0) } else { (r0, r1) };
        ExactProfile {
            symbol_form: symbol_form.clone(),
            u: u.iter().zip(&shift).map(|(a, b)| crate::geometry::wrap_unit(a + b)).collect(),
            rank0: r0,
            rank1: r1,
        }
    });
    Ok(ModeBlock { u, k0, a0, k1, a1, symbol_form, a_norm, even, odd, s_inv, basis: raw.basis, exact })
}

/// `D(m)` for a single mode.
pub fn build_mode_operator(spec: &ComplexSpec, m: Mode) -> Result<ModeOperator> {
    Ok(ModeBuilder::new(spec)?.operator(m))
}

/// Certificate radius `R₀` (in units of `sqrt(ξᵀBξ)`): beyond it no mode
/// carries harmonic forms, by Weyl's inequality and the exactness of the
/// symbol sequence.
pub fn kernel_bound_radius(spec: &ComplexSpec) -> Result<f64> {
    Ok(ModeBuilder::new(spec)?.kernel_radius())
}

/// Short human-readable description, used in reports.
pub fn describe(spec: &ComplexSpec) -> String {
    let kind = match &spec.kind {
        ComplexKind::TwistedDeRham { .. } => String::from("twisted de Rham"),
        ComplexKind::TwistedDolbeault { p, .. } => format!("twisted Dolbeault (p = {p})"),
        ComplexKind::Superconnection(d) => format!("superconnection on C^{}|{}", d.rank.0, d.rank.1),
        ComplexKind::DirectSum(parts) => format!("direct sum of {} complexes", parts.len()),
    };
    format!("{kind} on T^{} with u = {:?}", spec.n(), spec.character.u())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn e10() -> CMatrix {
        let mut m = CMatrix::zeros(2, 2);
        m[(1, 0)] = c(1.0);
        m
    }

    #[test]
    fn odd_forms_square_to_zero() {
        let mut state = 7u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let terms: Vec<(u32, C64)> =
            (0..16u32).filter(|m| m.count_ones() % 2 == 1).map(|m| (m, C64::new(rnd(), rnd()))).collect();
        let w = wedge_matrix(&ConstantForm::scalar(4, Parity::Odd, &terms).unwrap());
        assert!(w.mul(&w).max_abs() < 1e-15);
    }

    #[test]
    fn parity_is_validated() {
        assert!(ConstantForm::scalar(3, Parity::Odd, &[(0b11, c(1.0))]).is_err());
        assert!(ConstantForm::endomorphism(2, (1, 1), Parity::Odd, vec![(0, CMatrix::identity(2))]).is_err());
        assert!(ConstantForm::endomorphism(2, (1, 1), Parity::Odd, vec![(0, e10())]).is_ok());
    }

    #[test]
    fn flatness_examples() {
        let h =
            ComplexSpec::de_rham(FlatTorus::identity(3), ConstantForm::volume(3, 1.0), Character::trivial(3)).unwrap();
        assert_eq!(check_flatness(&h).residual, 0.0);
        // A = H ⊗ id_F
        let a = ConstantForm::endomorphism(3, (1, 1), Parity::Odd, vec![(0b111, CMatrix::identity(2))]).unwrap();
        let sc = ComplexSpec::superconnection(
            FlatTorus::identity(3),
            SuperconnectionData::new((1, 1), a).unwrap(),
            Character::trivial(3),
        )
        .unwrap();
        assert!(check_flatness(&sc).pass);
        // An odd endomorphism squaring to the identity is not flat.
        let y = e10().add(&e10().transpose());
        let bad = ConstantForm::endomorphism(3, (1, 1), Parity::Odd, vec![(0, y.clone()), (0b110, y)]).unwrap();
        let w = wedge_matrix(&bad);
        let direct = w.mul(&w).max_abs();
        let spec = ComplexSpec::superconnection(
            FlatTorus::identity(3),
            SuperconnectionData::new((1, 1), bad).unwrap(),
            Character::trivial(3),
        )
        .unwrap();
        let f = check_flatness(&spec);
        assert!(!f.pass && f.residual == direct && direct > 0.5);
        assert!(ModeBuilder::new(&spec).is_err());
    }

    #[test]
    fn circle_mode_operator() {
        let spec = ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[0.25]).unwrap();
        let op = build_mode_operator(&spec, Mode::new(&[2])).unwrap();
        let d0 = op.d0();
        assert!((d0[(0, 0)] - I * (2.0 * PI * 2.25)).norm() < 1e-13);
        assert_eq!(op.d1().max_abs(), 0.0);
        assert!((op.blocks[0].q - 4.0 * PI * PI * 2.25 * 2.25).abs() < 1e-9);
    }

    #[test]
    fn zero_mode_with_volume_flux() {
        let spec =
            ComplexSpec::de_rham(FlatTorus::identity(3), ConstantForm::volume(3, 0.7), Character::trivial(3)).unwrap();
        let op = build_mode_operator(&spec, Mode::new(&[0, 0, 0])).unwrap();
        let d0 = op.d0();
        // Only 1 ↦ θ vol survives.
        let nonzero: Vec<_> = d0.as_slice().iter().filter(|z| z.norm() > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0].norm() - 0.7).abs() < 1e-14);
        assert_eq!(op.d1().max_abs(), 0.0);
    }

    #[test]
    fn d_squared_vanishes_for_every_kind() {
        let g = RMatrix::from_rows(&[vec![1.2, 0.3, 0.0], vec![0.3, 0.8, 0.1], vec![0.0, 0.1, 1.5]]).unwrap();
        let t3 = FlatTorus::new(g).unwrap();
        let a = ConstantForm::endomorphism(
            3,
            (1, 1),
            Parity::Odd,
            vec![(0b111, CMatrix::identity(2)), (0, e10().scale(c(0.8)))],
        )
        .unwrap();
        let specs = [
            ComplexSpec::de_rham(t3.clone(), ConstantForm::volume(3, 1.3), Character::new(&[0.3, 0.1, 0.7]).unwrap())
                .unwrap(),
            ComplexSpec::superconnection(
                t3.clone(),
                SuperconnectionData::new((1, 1), a).unwrap(),
                Character::new(&[0.2, 0.5, 0.9]).unwrap(),
            )
            .unwrap(),
            ComplexSpec::dolbeault(
                ComplexTorus::new(C64::new(0.4, 1.1), 1.3, (0.2, 0.3)).unwrap(),
                1,
                ConstantForm::scalar(1, Parity::Odd, &[(1, C64::new(0.2, -0.4))]).unwrap(),
            )
            .unwrap(),
        ];
        for spec in &specs {
            let b = ModeBuilder::new(spec).unwrap();
            let n = spec.n();
            for m in [[0, 0, 0], [1, -2, 3], [-4, 0, 1]] {
                let op = b.operator(Mode::new(&m[..n]));
                let (d0, d1) = (op.d0(), op.d1());
                assert!(d1.mul(&d0).max_abs() < 1e-12);
                assert!(d0.mul(&d1).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn koszul_singular_values() {
        // H = 0: nonzero singular values of D(m) on Λᵏ are 2π|ξ| with
        // multiplicity C(n−1, k).
        for n in 1..=4 {
            let gram = RMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + 0.2 * i as f64 } else { 0.1 });
            let t = FlatTorus::new(gram).unwrap();
            let u: Vec<f64> = (0..n).map(|j| 0.13 + 0.2 * j as f64).collect();
            let spec = ComplexSpec::flat_de_rham(t.clone(), &u).unwrap();
            let b = ModeBuilder::new(&spec).unwrap();
            let m: Vec<i32> = (0..n as i32).map(|j| j - 1).collect();
            let op = b.operator(Mode::new(&m));
            let xi = Mode::new(&m).xi(&u);
            let target = 4.0 * PI * PI * t.dual_norm_sq(&xi);
            let ev0 = hermitian_eigenvalues(&op.d0().gram()).unwrap();
            let ev1 = hermitian_eigenvalues(&op.d1().gram()).unwrap();
            let nz0 = ev0.iter().filter(|&&x| x > 1e-8).count();
            let nz1 = ev1.iter().filter(|&&x| x > 1e-8).count();
            let (r0, r1) = de_rham_ranks(n, 1, 0);
            assert_eq!((nz0, nz1), (r0, r1), "n={n}");
            for &x in ev0.iter().chain(&ev1).filter(|&&x| x > 1e-8) {
                assert!((x - target).abs() < 1e-9 * target);
            }
            assert!((op.blocks[0].q - target).abs() < 1e-9 * target);
        }
    }

    #[test]
    fn flux_only_enters_through_constant_part() {
        let spec = ComplexSpec::de_rham(
            FlatTorus::identity(3),
            ConstantForm::volume(3, 0.9),
            Character::new(&[0.1, 0.2, 0.3]).unwrap(),
        )
        .unwrap();
        let plain = ComplexSpec::flat_de_rham(FlatTorus::identity(3), &[0.1, 0.2, 0.3]).unwrap();
        let (b, p) = (ModeBuilder::new(&spec).unwrap(), ModeBuilder::new(&plain).unwrap());
        let m1 = Mode::new(&[1, 0, -1]);
        let m2 = Mode::new(&[-2, 3, 0]);
        let diff1 = b.operator(m1).d0().sub(&p.operator(m1).d0());
        let diff2 = b.operator(m2).d0().sub(&p.operator(m2).d0());
        assert!(diff1.sub(&diff2).max_abs() < 1e-13);
    }

    #[test]
    fn dolbeault_symbol_magnitude() {
        let tau = C64::new(0.3, 1.2);
        let ct = ComplexTorus::new(tau, 1.0, (0.2, 0.35)).unwrap();
        let spec = ComplexSpec::dolbeault(ct, 0, ConstantForm::zero(1, Parity::Odd)).unwrap();
        let b = ModeBuilder::new(&spec).unwrap();
        let op = b.operator(Mode::new(&[1, -1]));
        let xi = &op.blocks[0].xi;
        let sigma = (tau * xi[0] - xi[1]) * (PI / tau.im);
        // |dz̄|² = 2 for unit area scale.
        let expect = sigma.norm_sqr() * 2.0;
        assert!((op.d0().gram()[(0, 0)].re - expect).abs() < 1e-10 * expect);
        assert!((op.blocks[0].q - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn kernel_radius_examples() {
        let plain = ComplexSpec::flat_de_rham(FlatTorus::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(kernel_bound_radius(&plain).unwrap(), 0.0);
        let b = ModeBuilder::new(&plain).unwrap();
        assert_eq!(b.kernel_candidates(100).unwrap(), vec![Mode::new(&[0, 0])]);
        let generic = ComplexSpec::flat_de_rham(FlatTorus::identity(2), &[0.3, 0.6]).unwrap();
        assert!(ModeBuilder::new(&generic).unwrap().kernel_candidates(100).unwrap().is_empty());
        let th =
            ComplexSpec::de_rham(FlatTorus::identity(3), ConstantForm::volume(3, 2.5), Character::trivial(3)).unwrap();
        assert!((kernel_bound_radius(&th).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn exact_profiles() {
        let spec = ComplexSpec::flat_de_rham(FlatTorus::identity(3), &[0.1, 0.2, 0.3]).unwrap();
        let p = ModeBuilder::new(&spec).unwrap().exact_profiles().unwrap();
        assert_eq!((p[0].rank0, p[0].rank1), (2, 2));
        let circle = ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[0.25]).unwrap();
        let p = ModeBuilder::new(&circle).unwrap().exact_profiles().unwrap();
        assert_eq!((p[0].rank0, p[0].rank1), (1, 0));
        let swapped = ModeBuilder::new(&circle.grade_swapped()).unwrap().exact_profiles().unwrap();
        assert_eq!((swapped[0].rank0, swapped[0].rank1), (0, 1));
        let th =
            ComplexSpec::de_rham(FlatTorus::identity(3), ConstantForm::volume(3, 1.0), Character::trivial(3)).unwrap();
        assert!(ModeBuilder::new(&th).unwrap().exact_profiles().is_none());
        let imag = ConstantForm::scalar(1, Parity::Odd, &[(1, C64::new(0.0, PI / 2.0))]).unwrap();
        let shifted = ComplexSpec::de_rham(FlatTorus::identity(1), imag, Character::trivial(1)).unwrap();
        let p = ModeBuilder::new(&shifted).unwrap().exact_profiles().unwrap();
        assert!((p[0].u[0] - 0.25).abs() < 1e-15);
    }
}
