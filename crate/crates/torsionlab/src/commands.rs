//! The four verbs. Each returns what it wrote so callers (and tests) can
//! inspect the artifacts.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use torsionlab_core::complex::{ComplexSpec, Parity};
use torsionlab_core::geometry::Character;
use torsionlab_core::special::{dedekind_eta, kronecker_torsion, theta1_product};
use torsionlab_core::spectral::{heat_trace, SpectralOptions};
use torsionlab_core::torsion::{
    analytic_torsion, anomaly_check, covering_check, direct_sum_check, flux_continuity, gauge_sweep, kronecker_match,
    linspace, metric_sweep, product_check_circles, relative_metric_sweep, SuiteReport,
};
use torsionlab_core::zeta::{hurwitz_logdet, zeta_regularity_check};
use torsionlab_core::C64;

use crate::config::{scalar_form, Catalog, Check, Job, OracleCall, RunConfig, Task};
use crate::error::{CliError, CliResult};
use crate::pool::Pool;
use crate::report::{
    flux_csv, heat_trace_csv, num, relative_sweep_csv, suite_json, sweep_csv, torsion_json, zeta_json,
};

pub struct Context {
    pub config: RunConfig,
    pub catalog: Catalog,
    pub pool: Pool,
    pub out: PathBuf,
    /// Overrides every declared tolerance.
    pub tolerance: Option<f64>,
}

impl Context {
    pub fn new(config: RunConfig, threads: usize, out: PathBuf, tolerance: Option<f64>) -> CliResult<Self> {
        if let Some(t) = tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config("--tolerance must be positive".into()));
            }
        }
        let catalog = config.catalog()?;
        let pool = Pool::new(threads).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(Self { config, catalog, pool, out, tolerance })
    }

    fn spec(&self, name: &str) -> &ComplexSpec {
        &self.catalog.specs[name]
    }

    fn tol(&self, declared: f64) -> f64 {
        self.tolerance.unwrap_or(declared)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        let p = self.out.join(name);
        std::fs::write(&p, bytes)?;
        Ok(p)
    }

    fn write_json(&self, name: &str, v: &Value) -> CliResult<PathBuf> {
        let mut s = serde_json::to_string_pretty(v).expect("json");
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn jobs<'a>(&'a self, only: Option<&'a str>, sweep: bool) -> CliResult<Vec<&'a Job>> {
        let jobs: Vec<&Job> = self
            .config
            .jobs
            .iter()
            .filter(|j| j.task.is_sweep() == sweep && only.is_none_or(|o| o == j.name))
            .collect();
        if let (Some(o), true) = (only, jobs.is_empty()) {
            let kind = if sweep { "sweep" } else { "compute" };
            return Err(CliError::Config(format!("no {kind} job named '{o}'")));
        }
        Ok(jobs)
    }
}

/// Sibling file name: `a.csv` → `a.verdict.json`.
fn verdict_name(output: &str) -> String {
    let stem = Path::new(output).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| output.into());
    format!("{stem}.verdict.json")
}

pub fn compute(ctx: &Context, only: Option<&str>) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for job in ctx.jobs(only, false)? {
        let Task::Compute { heat_trace: times } = &job.task else { unreachable!() };
        let spec = ctx.spec(&job.spec);
        let pipe = ctx.config.knobs.pipeline(job.method);
        let tv = analytic_torsion(spec, &pipe, &ctx.pool)?;
        let v = json!({
            "job": job.name,
            "spec": job.spec,
            "method": format!("{:?}", pipe.method),
            "zeta": tv.grades.iter().map(zeta_json).collect::<Vec<_>>(),
            "torsion": torsion_json(&tv),
        });
        written.push(ctx.write_json(&job.output, &v)?);
        if !times.is_empty() {
            let opts = SpectralOptions { laplacians: true, ..ctx.config.knobs.spectral() };
            let rows = times.iter().map(|&t| heat_trace(spec, t, &opts, &ctx.pool)).collect::<Result<Vec<_>, _>>()?;
            let name = format!("{}.heat.csv", Path::new(&job.output).file_stem().unwrap().to_string_lossy());
            written.push(ctx.write(&name, &heat_trace_csv(&rows)?)?);
        }
    }
    Ok(written)
}

/// Runs one sweep job and returns its CSV bytes and verdict.
pub fn run_sweep(ctx: &Context, job: &Job) -> CliResult<(Vec<u8>, SuiteReport)> {
    let spec = ctx.spec(&job.spec);
    let pipe = ctx.config.knobs.pipeline(job.method);
    let exec = &ctx.pool;
    match &job.task {
        Task::MetricSweep { path, range, samples, tolerance, relative } => {
            let path = path.build(spec.torus())?;
            let ss = linspace(range[0], range[1], *samples);
            let tol = ctx.tol(*tolerance);
            match relative {
                None => {
                    let sw = metric_sweep(spec, &path, &ss, tol, &pipe, exec)?;
                    Ok((sweep_csv(&sw)?, sw.report))
                }
                Some([a, b]) => {
                    let (r1, r2) = (Character::new(a)?, Character::new(b)?);
                    let sw = relative_metric_sweep(spec, &r1, &r2, &path, &ss, tol, &pipe, exec)?;
                    Ok((relative_sweep_csv(&sw)?, sw.report))
                }
            }
        }
        Task::GaugeSweep { beta, range, samples, tolerance } => {
            let beta = scalar_form(spec.n(), beta, Parity::Even)
                .map_err(|e| CliError::Config(format!("job '{}': {e}", job.name)))?;
            let sw =
                gauge_sweep(spec, &beta, &linspace(range[0], range[1], *samples), ctx.tol(*tolerance), &pipe, exec)?;
            Ok((sweep_csv(&sw)?, sw.report))
        }
        Task::FluxSweep { eps } => {
            let f = flux_continuity(|e| spec.with_flux_scaled(e), eps, &pipe, exec)?;
            let max = f.rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
            let report = SuiteReport {
                suite: "flux".into(),
                spec: job.spec.clone(),
                samples: f.rows.len(),
                max_deviation: max,
                tolerance: f64::NAN,
                pass: f.pass,
            };
            Ok((flux_csv(&f)?, report))
        }
        Task::Compute { .. } => Err(CliError::Config(format!("job '{}' is not a sweep", job.name))),
    }
}

pub fn sweep(ctx: &Context, only: Option<&str>) -> CliResult<Vec<(PathBuf, SuiteReport)>> {
    let mut out = Vec::new();
    for job in ctx.jobs(only, true)? {
        let (csv, report) = run_sweep(ctx, job)?;
        let p = ctx.write(&job.output, &csv)?;
        ctx.write_json(&verdict_name(&job.output), &suite_json(&report))?;
        out.push((p, report));
    }
    Ok(out)
}

fn c64(z: [f64; 2]) -> C64 {
    C64::new(z[0], z[1])
}

/// Closed-form value; complex results keep both parts.
pub fn oracle(call: &OracleCall) -> CliResult<C64> {
    Ok(match call {
        OracleCall::Eta { tau } => dedekind_eta(c64(*tau))?,
        OracleCall::Theta1 { z, tau } => theta1_product(c64(*z), c64(*tau))?,
        OracleCall::Kronecker { u, v, tau } => C64::new(kronecker_torsion(*u, *v, c64(*tau))?, 0.0),
        OracleCall::HurwitzLogdet { u } => C64::new(hurwitz_logdet(*u)?, 0.0),
    })
}

/// Twelve significant digits; the imaginary part only when it is not
/// negligible.
pub fn format_oracle(z: C64) -> String {
    let g = |x: f64| {
        let s = format!("{:.*e}", 11, x);
        let (m, e) = s.split_once('e').unwrap();
        let e: i32 = e.parse().unwrap();
        if (-5..12).contains(&e) {
            format!("{:.*}", (11 - e).max(0) as usize, x)
        } else {
            format!("{m}e{e}")
        }
    };
    if z.im.abs() <= 1e-14 * z.re.abs().max(1e-300) {
        g(z.re)
    } else {
        format!("{} {} {}i", g(z.re), if z.im < 0.0 { '-' } else { '+' }, g(z.im.abs()))
    }
}

fn check_report(ctx: &Context, name: &str, check: &Check) -> CliResult<SuiteReport> {
    let exec = &ctx.pool;
    let pipe = ctx.config.knobs.pipeline(None);
    let report = |spec: &str, samples, dev: f64, tol: f64| SuiteReport {
        suite: name.into(),
        spec: spec.into(),
        samples,
        max_deviation: dev,
        tolerance: tol,
        pass: dev < tol,
    };
    Ok(match check {
        Check::Torsion { spec, expected, tolerance } => {
            let t = analytic_torsion(ctx.spec(spec), &pipe, exec)?;
            report(spec, 1, (t.log_tau - expected).abs(), ctx.tol(*tolerance))
        }
        Check::Oracle { call, expected, tolerance } => {
            let v = oracle(call)?;
            report(&format!("{call:?}"), 1, (v.re - expected).abs(), ctx.tol(*tolerance))
        }
        Check::Kronecker { u, v, tau, tolerance } => {
            let (t, k) = kronecker_match(*u, *v, c64(*tau), &pipe, exec)?;
            let rel = ((t.log_tau - k).exp() - 1.0).abs();
            report(&format!("dolbeault u={u} v={v} tau={tau:?}"), 1, rel, ctx.tol(*tolerance))
        }
        Check::DirectSum { first, second, tolerance } => {
            let c = direct_sum_check(ctx.spec(first), ctx.spec(second), &pipe, ctx.tol(*tolerance), exec)?;
            SuiteReport { suite: name.into(), ..c.report }
        }
        Check::Covering { u, fold, tolerance } => {
            SuiteReport { suite: name.into(), ..covering_check(*u, *fold, ctx.tol(*tolerance))?.report }
        }
        Check::ProductCircles { u1, u2 } => {
            SuiteReport { suite: name.into(), ..product_check_circles(*u1, *u2, &pipe, exec)?.report }
        }
        Check::McKeanSinger { spec, times, tolerance } => {
            let s = ctx.spec(spec);
            let opts = SpectralOptions { laplacians: true, ..ctx.config.knobs.spectral() };
            let chi = torsionlab_core::spectral::betti_numbers(s)?.chi as f64;
            let mut dev: f64 = 0.0;
            for &t in times {
                dev = dev.max((heat_trace(s, t, &opts, exec)?.str - chi).abs());
            }
            report(spec, times.len(), dev, ctx.tol(*tolerance))
        }
        Check::Regularity { spec, tolerance } => {
            let tol = ctx.tol(*tolerance);
            let mut dev: f64 = 0.0;
            for grade in 0..2 {
                dev = dev.max(zeta_regularity_check(ctx.spec(spec), grade, tol, &pipe.heat, exec)?.residue.abs());
            }
            report(spec, 2, dev, ctx.tol(*tolerance))
        }
        Check::Anomaly { spec, path, s0, step, tolerance } => {
            let s = ctx.spec(spec);
            let path = path.build(s.torus())?;
            let a = anomaly_check(s, &path, *s0, *step, ctx.tol(*tolerance), &pipe, exec)?;
            SuiteReport { suite: name.into(), ..a.report }
        }
        Check::Job { job } => {
            let j = ctx.config.jobs.iter().find(|j| &j.name == job).expect("checked reference");
            SuiteReport { suite: name.into(), ..run_sweep(ctx, j)?.1 }
        }
    })
}

pub struct VerifySummary {
    pub reports: Vec<SuiteReport>,
    pub path: PathBuf,
}

/// Runs every suite; a suite that errors counts as failed. Returns
/// `Failed` naming the failures after writing the summary.
pub fn verify(ctx: &Context) -> CliResult<VerifySummary> {
    if ctx.config.suites.is_empty() {
        eprintln!("warning: no suites declared; nothing to verify");
    }
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for s in &ctx.config.suites {
        match check_report(ctx, &s.name, &s.check) {
            Ok(r) => reports.push(r),
            Err(e) => {
                errors.push(json!({ "suite": s.name, "error": e.to_string() }));
                reports.push(SuiteReport {
                    suite: s.name.clone(),
                    spec: String::new(),
                    samples: 0,
                    max_deviation: f64::NAN,
                    tolerance: f64::NAN,
                    pass: false,
                });
            }
        }
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.suite.clone()).collect();
    let v = json!({
        "pass": failed.is_empty(),
        "suites": reports.iter().map(suite_json).collect::<Vec<_>>(),
        "errors": errors,
    });
    let path = ctx.write_json("verify.json", &v)?;
    for r in &reports {
        println!(
            "{} {} deviation {} tolerance {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.suite,
            num(r.max_deviation),
            num(r.tolerance)
        );
    }
    if failed.is_empty() {
        Ok(VerifySummary { reports, path })
    } else {
        Err(CliError::Failed(failed))
    }
}
