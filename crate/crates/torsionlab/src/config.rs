//! Run configuration: named geometries and complexes, jobs, suites, knobs.
//!
//! The file is JSON. Complex numbers are `[re, im]`, Gram matrices are
//! row-major arrays of rows, form terms list their coordinate indices.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use torsionlab_core::complex::{ComplexSpec, ConstantForm, Parity, SuperconnectionData};
use torsionlab_core::geometry::{Character, ComplexTorus, FlatTorus, MetricPath, PathFamily};
use torsionlab_core::spectral::{SpectralOptions, DEFAULT_ORDER, DEFAULT_SAMPLES};
use torsionlab_core::torsion::Pipeline;
use torsionlab_core::zeta::{HeatTraceSettings, Method};
use torsionlab_core::{CMatrix, RMatrix, C64};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub geometries: BTreeMap<String, GeometryDecl>,
    #[serde(default)]
    pub complexes: BTreeMap<String, ComplexDecl>,
    #[serde(default)]
    pub knobs: Knobs,
    #[serde(default)]
    pub jobs: Vec<Job>,
    #[serde(default)]
    pub suites: Vec<Suite>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometryDecl {
    Flat {
        gram: Vec<Vec<f64>>,
    },
    /// Complex torus `C/(Z + τZ)`; `area` scales the flat metric.
    Complex {
        tau: [f64; 2],
        #[serde(default = "one")]
        area: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// One term of a constant form: `coefficient · dx^{i₁}∧…` or the same with
/// an endomorphism given as rows of `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDecl {
    pub indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComplexDecl {
    DeRham {
        geometry: String,
        #[serde(default)]
        character: Option<Vec<f64>>,
        #[serde(default)]
        flux: Vec<TermDecl>,
    },
    /// Character is `(u, v)` along the two lattice generators.
    Dolbeault {
        geometry: String,
        #[serde(default)]
        p: usize,
        #[serde(default)]
        character: [f64; 2],
        #[serde(default)]
        flux: Vec<TermDecl>,
    },
    Superconnection {
        geometry: String,
        rank: [usize; 2],
        #[serde(default)]
        character: Option<Vec<f64>>,
        flux: Vec<TermDecl>,
    },
    DirectSum {
        parts: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodDecl {
    #[default]
    Auto,
    Exact,
    HeatTrace,
    CrossChecked,
}

impl From<MethodDecl> for Method {
    fn from(m: MethodDecl) -> Self {
        match m {
            MethodDecl::Auto => Method::Auto,
            MethodDecl::Exact => Method::Exact,
            MethodDecl::HeatTrace => Method::HeatTrace,
            MethodDecl::CrossChecked => Method::CrossChecked,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    pub method: MethodDecl,
    /// Truncation bound on every heat trace.
    pub tail_tol: f64,
    pub mode_limit: usize,
    /// Heat-trace fit window `[t_lo, t_hi]`; spectrum-adapted when absent.
    pub window: Option<[f64; 2]>,
    pub samples: usize,
    pub order: usize,
    pub threads: Option<usize>,
}

impl Default for Knobs {
    fn default() -> Self {
        let s = SpectralOptions::default();
        Self {
            method: MethodDecl::Auto,
            tail_tol: s.tail_tol,
            mode_limit: s.mode_limit,
            window: None,
            samples: DEFAULT_SAMPLES,
            order: DEFAULT_ORDER,
            threads: None,
        }
    }
}

impl Knobs {
    pub fn pipeline(&self, method: Option<MethodDecl>) -> Pipeline {
        Pipeline {
            method: method.unwrap_or(self.method).into(),
            heat: HeatTraceSettings {
                window: self.window.map(|w| (w[0], w[1])),
                samples: self.samples,
                order: self.order,
                spectral: self.spectral(),
            },
        }
    }

    pub fn spectral(&self) -> SpectralOptions {
        SpectralOptions { tail_tol: self.tail_tol, mode_limit: self.mode_limit, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathDecl {
    Constant,
    Conformal,
    DiagonalStretch { weights: Vec<f64> },
    Shear { i: usize, j: usize },
}

impl PathDecl {
    pub fn build(&self, base: &FlatTorus) -> torsionlab_core::Result<MetricPath> {
        let family = match self {
            PathDecl::Constant => PathFamily::Constant,
            PathDecl::Conformal => PathFamily::Conformal,
            PathDecl::DiagonalStretch { weights } => PathFamily::DiagonalStretch { weights: weights.clone() },
            PathDecl::Shear { i, j } => PathFamily::Shear { i: *i, j: *j },
        };
        MetricPath::new(base.clone(), family)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub name: String,
    pub spec: String,
    /// File name under the output directory.
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodDecl>,
    pub task: Task,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    /// Zeta data and torsion; optionally a heat-trace table at the given times.
    Compute {
        #[serde(default)]
        heat_trace: Vec<f64>,
    },
    MetricSweep {
        path: PathDecl,
        range: [f64; 2],
        samples: usize,
        tolerance: f64,
        /// Two characters: sweep the relative torsion instead.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        relative: Option<[Vec<f64>; 2]>,
    },
    GaugeSweep {
        beta: Vec<TermDecl>,
        range: [f64; 2],
        samples: usize,
        tolerance: f64,
    },
    /// Scales the declared flux by each `ε`.
    FluxSweep {
        eps: Vec<f64>,
    },
}

impl Task {
    pub fn is_sweep(&self) -> bool {
        !matches!(self, Task::Compute { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleCall {
    Eta {
        tau: [f64; 2],
    },
    Theta1 {
        z: [f64; 2],
        tau: [f64; 2],
    },
    Kronecker {
        u: f64,
        v: f64,
        tau: [f64; 2],
    },
    /// `log Det′` of `4π²(m+u)²` over the integers.
    HurwitzLogdet {
        u: f64,
    },
}

pub const ORACLE_NAMES: [&str; 4] = ["eta", "theta1", "kronecker", "hurwitz-logdet"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    pub check: Check,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Check {
    /// `|log τ − expected| < tolerance`.
    Torsion {
        spec: String,
        expected: f64,
        tolerance: f64,
    },
    /// Closed-form value (real part) against an expected number.
    Oracle {
        call: OracleCall,
        expected: f64,
        tolerance: f64,
    },
    /// Spectral Dolbeault torsion against the closed form, relative.
    Kronecker {
        u: f64,
        v: f64,
        tau: [f64; 2],
        tolerance: f64,
    },
    DirectSum {
        first: String,
        second: String,
        tolerance: f64,
    },
    Covering {
        u: f64,
        fold: usize,
        tolerance: f64,
    },
    ProductCircles {
        u1: f64,
        u2: f64,
    },
    McKeanSinger {
        spec: String,
        times: Vec<f64>,
        tolerance: f64,
    },
    Regularity {
        spec: String,
        tolerance: f64,
    },
    Anomaly {
        spec: String,
        path: PathDecl,
        s0: f64,
        step: f64,
        tolerance: f64,
    },
    /// Verdict of a sweep job declared under `jobs`.
    Job {
        job: String,
    },
}

/// Geometries and complexes resolved into core objects.
pub struct Catalog {
    pub specs: BTreeMap<String, ComplexSpec>,
}

fn c64(z: [f64; 2]) -> C64 {
    C64::new(z[0], z[1])
}

pub fn parse_complex(s: &str) -> Option<C64> {
    let s = s.trim().replace(' ', "");
    if let Some(body) = s.strip_suffix('i') {
        // split at the last sign that is not part of an exponent
        let bytes = body.as_bytes();
        let mut cut = None;
        for k in (1..bytes.len()).rev() {
            if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
                cut = Some(k);
                break;
            }
        }
        match cut {
            Some(k) => {
                let re: f64 = body[..k].parse().ok()?;
                let im = match &body[k..] {
                    "+" => 1.0,
                    "-" => -1.0,
                    t => t.parse().ok()?,
                };
                Some(C64::new(re, im))
            }
            None => {
                let im = match body {
                    "" | "+" => 1.0,
                    "-" => -1.0,
                    t => t.parse().ok()?,
                };
                Some(C64::new(0.0, im))
            }
        }
    } else {
        Some(C64::new(s.parse().ok()?, 0.0))
    }
}

fn mask(indices: &[usize], n: usize) -> Result<u32, String> {
    let mut m = 0u32;
    for &i in indices {
        if i >= n {
            return Err(format!("form index {i} out of range for dimension {n}"));
        }
        if m & (1 << i) != 0 {
            return Err(format!("repeated form index {i}"));
        }
        m |= 1 << i;
    }
    Ok(m)
}

/// Scalar form; parity read off the first term (odd when empty).
pub fn scalar_form(n: usize, terms: &[TermDecl], default: Parity) -> Result<ConstantForm, String> {
    let mut out = Vec::new();
    for t in terms {
        if t.matrix.is_some() {
            return Err("scalar form term carries a matrix".into());
        }
        let c = t.coefficient.ok_or("form term without coefficient")?;
        out.push((mask(&t.indices, n)?, c64(c)));
    }
    let parity = terms.first().map(|t| Parity::of(t.indices.len())).unwrap_or(default);
    ConstantForm::scalar(n, parity, &out).map_err(|e| e.to_string())
}

fn matrix_form(n: usize, rank: (usize, usize), terms: &[TermDecl]) -> Result<ConstantForm, String> {
    let dim = rank.0 + rank.1;
    let mut out = Vec::new();
    for t in terms {
        let rows = t.matrix.as_ref().ok_or("superconnection term without matrix")?;
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(format!("superconnection matrix must be {dim}×{dim}"));
        }
        let mut m = CMatrix::zeros(dim, dim);
        for (i, r) in rows.iter().enumerate() {
            for (j, z) in r.iter().enumerate() {
                m[(i, j)] = c64(*z);
            }
        }
        out.push((mask(&t.indices, n)?, m));
    }
    ConstantForm::endomorphism(n, rank, Parity::Odd, out).map_err(|e| e.to_string())
}

enum BuiltGeometry {
    Flat(FlatTorus),
    Complex { tau: C64, area: f64 },
}

fn build_geometry(decl: &GeometryDecl) -> Result<BuiltGeometry, String> {
    match decl {
        GeometryDecl::Flat { gram } => {
            let n = gram.len();
            if n == 0 || gram.iter().any(|r| r.len() != n) {
                return Err("Gram matrix must be square and non-empty".into());
            }
            let g = RMatrix::from_fn(n, n, |i, j| gram[i][j]);
            Ok(BuiltGeometry::Flat(FlatTorus::new(g).map_err(|e| e.to_string())?))
        }
        GeometryDecl::Complex { tau, area } => {
            ComplexTorus::new(c64(*tau), *area, (0.0, 0.0)).map_err(|e| e.to_string())?;
            Ok(BuiltGeometry::Complex { tau: c64(*tau), area: *area })
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds every declared complex; the first failure names its object.
    pub fn catalog(&self) -> CliResult<Catalog> {
        let mut geoms = BTreeMap::new();
        for (name, g) in &self.geometries {
            let built = build_geometry(g).map_err(|e| CliError::Config(format!("geometry '{name}': {e}")))?;
            geoms.insert(name.as_str(), built);
        }
        let mut specs = BTreeMap::new();
        let mut pending: Vec<&String> = self.complexes.keys().collect();
        // direct sums may reference complexes declared later
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for name in pending {
                match self.build_complex(name, &geoms, &specs)? {
                    Some(s) => {
                        specs.insert(name.clone(), s);
                    }
                    None => rest.push(name),
                }
            }
            if rest.len() == before {
                return Err(CliError::Config(format!("complex '{}': unresolved or cyclic direct-sum parts", rest[0])));
            }
            pending = rest;
        }
        let cat = Catalog { specs };
        self.check_references(&cat)?;
        Ok(cat)
    }

    fn build_complex(
        &self,
        name: &str,
        geoms: &BTreeMap<&str, BuiltGeometry>,
        done: &BTreeMap<String, ComplexSpec>,
    ) -> CliResult<Option<ComplexSpec>> {
        let err = |e: String| CliError::Config(format!("complex '{name}': {e}"));
        let flat = |g: &str| -> CliResult<FlatTorus> {
            match geoms.get(g) {
                Some(BuiltGeometry::Flat(t)) => Ok(t.clone()),
                Some(BuiltGeometry::Complex { .. }) => Err(err(format!("geometry '{g}' is complex; expected flat"))),
                None => Err(err(format!("unknown geometry '{g}'"))),
            }
        };
        let character = |n: usize, c: &Option<Vec<f64>>| -> CliResult<Character> {
            match c {
                Some(u) if u.len() != n => Err(err(format!("character has {} entries for dimension {n}", u.len()))),
                Some(u) => Character::new(u).map_err(|e| err(e.to_string())),
                None => Ok(Character::trivial(n)),
            }
        };
        let spec = match &self.complexes[name] {
            ComplexDecl::DeRham { geometry, character: c, flux } => {
                let t = flat(geometry)?;
                let n = t.n();
                let f = scalar_form(n, flux, Parity::Odd).map_err(err)?;
                ComplexSpec::de_rham(t, f, character(n, c)?)
            }
            ComplexDecl::Dolbeault { geometry, p, character: c, flux } => {
                let Some(BuiltGeometry::Complex { tau, area }) = geoms.get(geometry.as_str()) else {
                    return Err(err(format!("geometry '{geometry}' is not a declared complex torus")));
                };
                let torus = ComplexTorus::new(*tau, *area, (c[0], c[1])).map_err(|e| err(e.to_string()))?;
                let f = scalar_form(1, flux, Parity::Odd).map_err(err)?;
                ComplexSpec::dolbeault(torus, *p, f)
            }
            ComplexDecl::Superconnection { geometry, rank, character: c, flux } => {
                let t = flat(geometry)?;
                let n = t.n();
                let a = matrix_form(n, (rank[0], rank[1]), flux).map_err(err)?;
                let data = SuperconnectionData::new((rank[0], rank[1]), a).map_err(|e| err(e.to_string()))?;
                ComplexSpec::superconnection(t, data, character(n, c)?)
            }
            ComplexDecl::DirectSum { parts } => {
                let mut got = Vec::new();
                for p in parts {
                    if !self.complexes.contains_key(p) {
                        return Err(err(format!("unknown part '{p}'")));
                    }
                    match done.get(p) {
                        Some(s) => got.push(s.clone()),
                        None => return Ok(None),
                    }
                }
                ComplexSpec::direct_sum(got)
            }
        };
        spec.map(Some).map_err(|e| err(e.to_string()))
    }

    fn check_references(&self, cat: &Catalog) -> CliResult<()> {
        let spec = |s: &str, owner: &str| {
            if cat.specs.contains_key(s) {
                Ok(())
            } else {
                Err(CliError::Config(format!("{owner}: unknown complex '{s}'")))
            }
        };
        let positive = |x: f64, owner: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{owner}: tolerance must be positive")))
            }
        };
        let mut names = std::collections::BTreeSet::new();
        for j in &self.jobs {
            let owner = format!("job '{}'", j.name);
            if !names.insert(j.name.as_str()) {
                return Err(CliError::Config(format!("{owner}: duplicate name")));
            }
            spec(&j.spec, &owner)?;
            match &j.task {
                Task::MetricSweep { tolerance, samples, .. } | Task::GaugeSweep { tolerance, samples, .. } => {
                    positive(*tolerance, &owner)?;
                    if *samples == 0 {
                        return Err(CliError::Config(format!("{owner}: needs at least one sample")));
                    }
                }
                Task::FluxSweep { eps } if eps.iter().any(|e| !(*e > 0.0)) => {
                    return Err(CliError::Config(format!("{owner}: flux scales must be positive")));
                }
                _ => {}
            }
        }
        for s in &self.suites {
            let owner = format!("suite '{}'", s.name);
            match &s.check {
                Check::Torsion { spec: x, tolerance, .. }
                | Check::McKeanSinger { spec: x, tolerance, .. }
                | Check::Regularity { spec: x, tolerance }
                | Check::Anomaly { spec: x, tolerance, .. } => {
                    spec(x, &owner)?;
                    positive(*tolerance, &owner)?;
                }
                Check::DirectSum { first, second, tolerance } => {
                    spec(first, &owner)?;
                    spec(second, &owner)?;
                    positive(*tolerance, &owner)?;
                }
                Check::Oracle { tolerance, .. }
                | Check::Kronecker { tolerance, .. }
                | Check::Covering { tolerance, .. } => positive(*tolerance, &owner)?,
                Check::ProductCircles { .. } => {}
                Check::Job { job } => match self.jobs.iter().find(|j| &j.name == job) {
                    Some(j) if j.task.is_sweep() => {}
                    Some(_) => return Err(CliError::Config(format!("{owner}: job '{job}' is not a sweep"))),
                    None => return Err(CliError::Config(format!("{owner}: unknown job '{job}'"))),
                },
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("0+1i"), Some(C64::new(0.0, 1.0)));
        assert_eq!(parse_complex("0.5+1i"), Some(C64::new(0.5, 1.0)));
        assert_eq!(parse_complex("i"), Some(C64::new(0.0, 1.0)));
        assert_eq!(parse_complex("-2.5"), Some(C64::new(-2.5, 0.0)));
        assert_eq!(parse_complex("1e-3-2e+1i"), Some(C64::new(1e-3, -20.0)));
        assert_eq!(parse_complex("x"), None);
    }

    #[test]
    fn non_spd_gram_names_the_geometry() {
        let cfg =
            RunConfig::from_json(r#"{"geometries": {"bad": {"type": "flat", "gram": [[1, 2], [2, 1]]}}}"#).unwrap();
        let e = cfg.catalog().err().unwrap().to_string();
        assert!(e.contains("'bad'"), "{e}");
    }

    #[test]
    fn direct_sums_resolve_out_of_order() {
        let cfg = RunConfig::from_json(
            r#"{
              "geometries": {"s1": {"type": "flat", "gram": [[1]]}},
              "complexes": {
                "a": {"kind": "direct-sum", "parts": ["b", "c"]},
                "b": {"kind": "de-rham", "geometry": "s1", "character": [0.25]},
                "c": {"kind": "de-rham", "geometry": "s1", "character": [0.5]}
              }
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.catalog().unwrap().specs.len(), 3);
    }
}
